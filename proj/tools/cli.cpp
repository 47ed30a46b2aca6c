#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ilmfuse/aed_model.hpp"
#include "ilmfuse/container.hpp"
#include "ilmfuse/decode_driver.hpp"
#include "ilmfuse/error.hpp"
#include "ilmfuse/metrics.hpp"
#include "ilmfuse/neural_lm.hpp"
#include "ilmfuse/rnnt_model.hpp"
#include "ilmfuse/tuning.hpp"

namespace ilmfuse::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

int default_jobs() {
  if (const char* env = std::getenv("ILMFUSE_JOBS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n >= 1) return static_cast<int>(n);
  }
  return 1;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

// Containers loaded for one run, keyed by role.
struct ModelBundle {
  Json checksums = Json::object();
  std::optional<RnntModel> rnnt;
  std::optional<AedModel> aed;
  std::optional<NeuralLm> target;
  std::optional<NeuralLm> source;

  DecodeModels view() const {
    return {rnnt ? &*rnnt : nullptr, aed ? &*aed : nullptr, target ? &*target : nullptr,
            source ? &*source : nullptr};
  }
};

ModelContainer load_recorded(const std::string& path, const char* role, Json& checksums) {
  auto c = load_container(path);
  checksums[role] = {{"path", path}, {"checksum", hex64(payload_checksum(c))}};
  return c;
}

NeuralLm load_lm(const std::string& path, const char* role, const Vocabulary& vocab,
                 Json& checksums) {
  auto c = load_recorded(path, role, checksums);
  if (c.kind != ModelKind::kLm) {
    throw ConfigError(std::string(role) + " " + path + " is a " + model_kind_name(c.kind) +
                      " container, expected lm");
  }
  if (!(c.vocabulary == vocab)) {
    throw ConfigError(std::string(role) + " vocabulary differs from the E2E model's");
  }
  return NeuralLm(c);
}

struct DecodeFlags {
  std::string e2e;
  std::string method = "baseline";
  std::string lm;
  std::string source_lm;
  double lm_weight = 0.0;
  double sub_weight = 0.0;
  int beam = 25;
  std::string input;
  std::string output;
  int jobs = 1;
  int max_symbols = 5;
  int max_len = 0;
  bool length_norm = false;
  std::uint64_t seed = 0;

  SearchOptions options() const {
    SearchOptions o;
    o.beam = beam;
    o.max_symbols_per_frame = max_symbols;
    o.max_len = max_len;
    o.length_normalize = length_norm;
    return o;
  }

  Json to_json() const {
    return {{"e2e", e2e},
            {"method", method},
            {"lm", lm},
            {"source_lm", source_lm},
            {"lm_weight", lm_weight},
            {"sub_weight", sub_weight},
            {"beam", beam},
            {"max_symbols_per_frame", max_symbols},
            {"max_len", max_len},
            {"length_norm", length_norm},
            {"input", input},
            {"jobs", jobs}};
  }
};

void add_decode_flags(CLI::App* cmd, DecodeFlags& f) {
  cmd->add_option("--e2e", f.e2e, "RNN-T or AED container")->required();
  cmd->add_option("--method", f.method, "baseline | shallow_fusion | density_ratio | ilme");
  cmd->add_option("--lm", f.lm, "target-domain LM container");
  cmd->add_option("--source-lm", f.source_lm, "source-domain LM container (density_ratio)");
  cmd->add_option("--lm-weight", f.lm_weight, "target LM weight");
  cmd->add_option("--sub-weight", f.sub_weight, "source/internal LM subtraction weight");
  cmd->add_option("--beam", f.beam, "beam size")->capture_default_str();
  cmd->add_option("--input", f.input, "utterance manifest (.jsonl)")->required();
  cmd->add_option("--jobs", f.jobs, "parallel utterances (default $ILMFUSE_JOBS or 1)");
  cmd->add_option("--max-symbols-per-frame", f.max_symbols, "RNN-T emissions per frame")
      ->capture_default_str();
  cmd->add_option("--max-len", f.max_len, "AED max label length (0: number of frames)");
  cmd->add_flag("--length-norm", f.length_norm, "rank n-best by per-token fused score");
  cmd->add_option("--seed", f.seed, "recorded in the run manifest");
}

ModelBundle load_bundle(const DecodeFlags& f, const FusionConfig& config) {
  ModelBundle b;
  auto e2e = load_recorded(f.e2e, "e2e", b.checksums);
  if (e2e.kind == ModelKind::kRnnt) {
    b.rnnt.emplace(e2e);
  } else if (e2e.kind == ModelKind::kAed) {
    b.aed.emplace(e2e);
  } else {
    throw ConfigError("--e2e " + f.e2e + " is a " + model_kind_name(e2e.kind) +
                      " container, expected rnnt or aed");
  }
  const auto& vocab = e2e.vocabulary;
  validate_config(config, {!f.lm.empty(), !f.source_lm.empty()});
  if (!f.lm.empty()) b.target.emplace(load_lm(f.lm, "target_lm", vocab, b.checksums));
  if (!f.source_lm.empty()) b.source.emplace(load_lm(f.source_lm, "source_lm", vocab, b.checksums));
  return b;
}

FusionConfig fusion_config(const DecodeFlags& f) {
  FusionConfig config{parse_fusion_method(f.method), f.lm_weight, f.sub_weight};
  validate_weights(config);
  if (f.beam < 1) throw ConfigError("--beam must be at least 1");
  if (f.jobs < 1) throw ConfigError("--jobs must be at least 1");
  if (f.max_symbols < 1) throw ConfigError("--max-symbols-per-frame must be at least 1");
  if (f.max_len < 0) throw ConfigError("--max-len must be non-negative");
  return config;
}

Json run_manifest(const std::string& command, Json config, const Json& checksums,
                  std::uint64_t seed, double seconds, const std::vector<std::string>& outputs) {
  return {{"command", command},
          {"config", std::move(config)},
          {"models", checksums},
          {"seed", seed},
          {"wall_clock_seconds", seconds},
          {"outputs", outputs}};
}

int cmd_decode(const DecodeFlags& f, std::ostream& out) {
  const auto start = Clock::now();
  const auto config = fusion_config(f);
  auto bundle = load_bundle(f, config);
  const auto models = bundle.view();
  const auto& vocab = e2e_vocabulary(models);
  const auto set = load_utterance_set(f.input, &vocab);
  const auto results = decode_set(set, models, config, f.options(), f.jobs);
  write_atomic(f.output, nbest_jsonl(set, results, vocab));
  const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
  const std::string manifest_path = f.output + ".run.json";
  write_atomic(manifest_path,
               run_manifest("decode", f.to_json(), bundle.checksums, f.seed, seconds, {f.output})
                       .dump(2) +
                   "\n");
  out << "decoded " << set.size() << " utterances -> " << f.output << "\n";
  return kOk;
}

struct TuneFlags {
  std::string grid_lm;
  std::string grid_sub;
  std::string best;
};

int cmd_tune(const DecodeFlags& f, const TuneFlags& t, std::ostream& out) {
  const auto start = Clock::now();
  const auto config = fusion_config(f);
  if (config.method == FusionMethod::kBaseline) throw ConfigError("tune needs a fusion method");
  const auto lm_axis = t.grid_lm.empty() ? default_lm_axis() : GridAxis::parse(t.grid_lm);
  const auto sub_axis = t.grid_sub.empty() ? default_sub_axis() : GridAxis::parse(t.grid_sub);
  auto bundle = load_bundle(f, config);
  const auto models = bundle.view();
  const auto set = load_utterance_set(f.input, &e2e_vocabulary(models));
  const auto grid = tune_weights(set, models, config.method, lm_axis.values(), sub_axis.values(),
                                 f.options(), f.jobs);
  write_atomic(f.output, surface_csv(grid));
  const std::string best_path = t.best.empty() ? f.output + ".best.json" : t.best;
  Json best{{"method", fusion_method_name(config.method)},
            {"lm_weight", grid.best.lm_weight},
            {"sub_weight", grid.best.sub_weight},
            {"dev_wer", grid.best.wer},
            {"points", grid.surface.size()}};
  write_atomic(best_path, best.dump(2) + "\n");
  auto cfg = f.to_json();
  cfg["grid_lm"] = t.grid_lm.empty() ? "0:0.4:0.02" : t.grid_lm;
  cfg["grid_sub"] = t.grid_sub.empty() ? "0:0.3:0.02" : t.grid_sub;
  const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
  write_atomic(f.output + ".run.json",
               run_manifest("tune", cfg, bundle.checksums, f.seed, seconds, {f.output, best_path})
                       .dump(2) +
                   "\n");
  out << best.dump() << "\n";
  return kOk;
}

struct PplFlags {
  std::string model;
  std::string scorer;
  std::string corpus;
  std::string output;
  std::optional<bool> include_eos;
};

int cmd_ppl(const PplFlags& f, std::ostream& out) {
  if (f.scorer != "lm" && f.scorer != "rnnt-ilm" && f.scorer != "aed-ilm") {
    throw ConfigError("--scorer must be lm, rnnt-ilm or aed-ilm");
  }
  const auto c = load_container(f.model);
  const ModelKind wanted = f.scorer == "lm"         ? ModelKind::kLm
                           : f.scorer == "rnnt-ilm" ? ModelKind::kRnnt
                                                    : ModelKind::kAed;
  if (c.kind != wanted) {
    throw ConfigError("scorer " + f.scorer + " cannot score a " + model_kind_name(c.kind) +
                      " container");
  }
  const auto refs = load_references(f.corpus, &c.vocabulary);
  std::vector<std::vector<TokenId>> corpus;
  corpus.reserve(refs.size());
  for (const auto& r : refs) corpus.push_back(token_ids(r.tokens, c.vocabulary));

  PerplexityReport report;
  bool eos = false;
  if (wanted == ModelKind::kLm) {
    NeuralLm lm(c);
    eos = f.include_eos.value_or(true);
    report = perplexity(corpus, LmScorer(lm, eos));
  } else if (wanted == ModelKind::kRnnt) {
    if (f.include_eos.value_or(false)) throw ConfigError("the RNN-T internal LM has no <eos>");
    RnntModel model(c);
    report = perplexity(corpus, RnntIlmScorer(model));
  } else {
    if (!f.include_eos.value_or(true)) throw ConfigError("the AED internal LM always scores <eos>");
    AedModel model(c);
    eos = true;
    report = perplexity(corpus, AedIlmScorer(model));
  }
  Json j{{"model", f.model},
         {"corpus", f.corpus},
         {"scorer", f.scorer},
         {"include_eos", eos},
         {"sentences", corpus.size()},
         {"token_count", report.token_count},
         {"log_prob_sum", report.log_prob_sum},
         {"ppl", report.ppl}};
  if (!f.output.empty()) write_atomic(f.output, j.dump(2) + "\n");
  out << j.dump() << "\n";
  return kOk;
}

struct WerFlags {
  std::string ref;
  std::string hyp;
  std::string output;
};

int cmd_wer(const WerFlags& f, std::ostream& out, std::ostream& err) {
  const auto refs = load_references(f.ref);
  bool word_pieces = false;
  for (const auto& r : refs) {
    for (const auto& t : r.tokens) word_pieces = word_pieces || t.starts_with(kWordBoundary);
  }

  std::map<std::string, std::string> hyp_text;
  {
    std::ifstream in(f.hyp);
    if (!in) throw IoError("cannot open " + f.hyp);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        if (j.value("rank", 1) == 1) {
          hyp_text[j.at("id").get<std::string>()] = j.at("text").get<std::string>();
        }
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(f.hyp + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  }

  std::vector<std::string> missing;
  std::set<std::string> ref_ids;
  for (const auto& r : refs) {
    ref_ids.insert(r.id);
    if (!hyp_text.contains(r.id)) missing.push_back(r.id);
  }
  std::vector<std::string> extra;
  for (const auto& [id, text] : hyp_text) {
    if (!ref_ids.contains(id)) extra.push_back(id);
  }
  if (!missing.empty() || !extra.empty()) {
    err << "error: reference and hypothesis ids differ\n";
    for (const auto& id : missing) err << "  missing hypothesis: " << id << "\n";
    for (const auto& id : extra) err << "  unknown hypothesis id: " << id << "\n";
    return kUsage;
  }

  std::vector<std::pair<WordSequence, WordSequence>> pairs;
  for (const auto& r : refs) {
    pairs.emplace_back(split_words(detokenize(r.tokens, word_pieces)), split_words(hyp_text[r.id]));
  }
  const auto result = corpus_wer(pairs);
  Json per = Json::array();
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& c = result.per_utterance[i];
    per.push_back({{"id", refs[i].id},
                   {"substitutions", c.substitutions},
                   {"insertions", c.insertions},
                   {"deletions", c.deletions},
                   {"ref_words", c.ref_words}});
  }
  Json j{{"ref", f.ref},
         {"hyp", f.hyp},
         {"substitutions", result.total.substitutions},
         {"insertions", result.total.insertions},
         {"deletions", result.total.deletions},
         {"ref_words", result.total.ref_words},
         {"wer", result.wer},
         {"utterances", per}};
  if (!f.output.empty()) write_atomic(f.output, j.dump(2) + "\n");
  Json summary = j;
  summary.erase("utterances");
  out << summary.dump() << "\n";
  return kOk;
}

int cmd_inspect(const std::string& path, std::ostream& out) {
  const auto c = load_container(path);
  out << "file:        " << path << "\n";
  out << "kind:        " << model_kind_name(c.kind) << "\n";
  out << "version:     " << kContainerVersion << "\n";
  out << "checksum:    " << hex64(payload_checksum(c)) << "\n";
  if (c.kind != ModelKind::kFeatures) {
    out << "vocabulary:  |V|=" << c.vocabulary.size() << " sos_id=" << c.vocabulary.sos_id()
        << " eos_id=" << c.vocabulary.eos_id();
    if (c.kind == ModelKind::kRnnt) out << " blank_id=" << c.vocabulary.blank_id();
    out << "\n";
  }
  out << "hyperparams: " << c.hyperparams.dump() << "\n";
  out << "tensors:\n";
  std::int64_t total = 0;
  for (const auto& [name, t] : c.tensors) {
    out << "  " << std::left << std::setw(24) << name << std::setw(16) << shape_string(t.shape())
        << t.size() << "\n";
    total += static_cast<std::int64_t>(t.size());
  }
  out << "parameters:  " << total << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ilmfuse: end-to-end ASR decoding with external LM fusion"};
  app.require_subcommand(1);

  DecodeFlags decode;
  decode.jobs = default_jobs();
  auto* decode_cmd = app.add_subcommand("decode", "beam-search decode a manifest");
  add_decode_flags(decode_cmd, decode);
  decode_cmd->add_option("--output", decode.output, "n-best JSONL path")->required();

  DecodeFlags tune;
  tune.jobs = default_jobs();
  TuneFlags tune_flags;
  auto* tune_cmd = app.add_subcommand("tune", "grid-search fusion weights on a dev manifest");
  add_decode_flags(tune_cmd, tune);
  tune_cmd->add_option("--output", tune.output, "tuning surface CSV path")->required();
  tune_cmd->add_option("--grid-lm", tune_flags.grid_lm, "start:stop:step (default 0:0.4:0.02)");
  tune_cmd->add_option("--grid-sub", tune_flags.grid_sub, "start:stop:step (default 0:0.3:0.02)");
  tune_cmd->add_option("--best", tune_flags.best, "best-point JSON (default <output>.best.json)");

  PplFlags ppl;
  auto* ppl_cmd = app.add_subcommand("ppl", "perplexity of an LM or internal-LM estimate");
  ppl_cmd->add_option("--model", ppl.model)->required();
  ppl_cmd->add_option("--scorer", ppl.scorer, "lm | rnnt-ilm | aed-ilm")->required();
  ppl_cmd->add_option("--corpus", ppl.corpus, "manifest; only id/ref are read")->required();
  ppl_cmd->add_option("--output", ppl.output, "also write the report here");
  bool eos_on = false;
  bool eos_off = false;
  ppl_cmd->add_flag("--include-eos", eos_on, "score <eos> (default for lm and aed-ilm)");
  ppl_cmd->add_flag("--no-eos", eos_off, "do not score <eos> (lm only)");

  WerFlags wer_flags;
  auto* wer_cmd = app.add_subcommand("wer", "word error rate of n-best 1-best vs references");
  wer_cmd->add_option("--ref", wer_flags.ref, "reference manifest")->required();
  wer_cmd->add_option("--hyp", wer_flags.hyp, "n-best JSONL")->required();
  wer_cmd->add_option("--output", wer_flags.output, "also write the full report here");

  std::string inspect_path;
  auto* inspect_cmd = app.add_subcommand("inspect", "print a container's header and tensors");
  inspect_cmd->add_option("--model", inspect_path)->required();

  std::vector<std::string> argv_store{"ilmfuse"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*decode_cmd) return cmd_decode(decode, out);
    if (*tune_cmd) return cmd_tune(tune, tune_flags, out);
    if (*ppl_cmd) {
      if (eos_on && eos_off) throw ConfigError("--include-eos and --no-eos are exclusive");
      if (eos_on) ppl.include_eos = true;
      if (eos_off) ppl.include_eos = false;
      return cmd_ppl(ppl, out);
    }
    if (*wer_cmd) return cmd_wer(wer_flags, out, err);
    if (*inspect_cmd) return cmd_inspect(inspect_path, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error& e) {
    // I/O, format and validation problems with input files.
    err << "error: " << e.what() << "\n";
    return kIo;
  }
  return kUsage;
}

}  // namespace ilmfuse::cli
