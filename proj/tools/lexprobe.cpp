// Command-line front end: one subcommand per pipeline step. Results go to
// stdout as JSON; errors go to stderr with a non-zero exit status.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lexprobe/cka_analysis.hpp"
#include "lexprobe/config_id.hpp"
#include "lexprobe/error.hpp"
#include "lexprobe/eval_mono.hpp"
#include "lexprobe/eval_xling.hpp"
#include "lexprobe/grid.hpp"
#include "lexprobe/text.hpp"

using namespace lexprobe;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct StoreArgs {
  std::string store;
  std::string backoff;

  StoreSet open() const {
    return {open_store(store), backoff.empty() ? nullptr : open_store(backoff)};
  }
};

// A full config id, or one without its layer part ("mono.aoc-100.withcls");
// only source, context and policy are used.
ExtractionConfig parse_family(const std::string& family) {
  try {
    return parse_config_id(family);
  } catch (const Error&) {
    return parse_config_id(family + ".l0");
  }
}

std::vector<std::string> read_words(const fs::path& path) { return Vocabulary::load(path).words(); }

std::vector<std::pair<std::string, std::string>> first_targets(const BilingualLexicon& lex) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& e : lex.entries) pairs.emplace_back(e.source, e.targets.front());
  return pairs;
}

void write_output(const std::string& content, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path);
  out << content;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

json cka_summary(const CkaResult& r) {
  json j = r.to_json();
  j.erase("pairs");
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Static word embeddings distilled from contextual encoders, and their evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  std::size_t workers = 1;
  app.add_option("--workers", workers, "Worker threads (0 = all cores)")->default_val(1);

  // distill
  auto* distill = app.add_subcommand("distill", "Build a type-level matrix from a token store");
  StoreArgs d_store;
  std::string d_vocab, d_config, d_out;
  distill->add_option("--store", d_store.store, "Primary token store")->required()->check(CLI::ExistingFile);
  distill->add_option("--store-iso,--backoff", d_store.backoff, "Isolated-word store used by AOC extraction")
      ->check(CLI::ExistingFile);
  distill->add_option("--vocab", d_vocab, "Vocabulary, one word per line")->required()->check(CLI::ExistingFile);
  distill->add_option("--config", d_config, "Configuration id, e.g. mono.iso.nospec.avg_le6")->required();
  distill->add_option("--out", d_out, "Output matrix (.lxtm binary, anything else text)")->required();

  // eval-lsim / eval-wa
  auto* lsim = app.add_subcommand("eval-lsim", "Word similarity (Spearman)");
  std::string m_matrix, m_data;
  for (auto* sub : {lsim, app.add_subcommand("eval-wa", "Word analogy (P@1)")}) {
    sub->add_option("--matrix", m_matrix, "Embedding matrix")->required()->check(CLI::ExistingFile);
    sub->add_option("--data", m_data, "Dataset file or directory")->required()->check(CLI::ExistingPath);
  }
  auto* wa = app.get_subcommand("eval-wa");

  // eval-bli / eval-clir
  auto* bli = app.add_subcommand("eval-bli", "Bilingual lexicon induction (MRR)");
  auto* clir = app.add_subcommand("eval-clir", "Cross-lingual retrieval (MAP)");
  std::string x_src, x_tgt, x_train, x_test, x_collection, x_idf = "smooth";
  for (auto* sub : {bli, clir}) {
    sub->add_option("--src", x_src, "Source-language matrix")->required()->check(CLI::ExistingFile);
    sub->add_option("--tgt", x_tgt, "Target-language matrix")->required()->check(CLI::ExistingFile);
    sub->add_option("--train", x_train, "Training lexicon for the mapping")->required()->check(CLI::ExistingFile);
  }
  bli->add_option("--test", x_test, "Test lexicon")->required()->check(CLI::ExistingFile);
  clir->add_option("--collection", x_collection, "Directory with documents/queries/qrels .tsv")
      ->required()
      ->check(CLI::ExistingDirectory);
  clir->add_option("--idf", x_idf, "IDF formula")->check(CLI::IsMember({"smooth", "plain"}));

  // relp-export / relp-baseline
  auto* relp_export = app.add_subcommand("relp-export", "Write relation-prediction features");
  std::string r_matrix, r_data, r_out;
  relp_export->add_option("--matrix", r_matrix, "Embedding matrix")->required()->check(CLI::ExistingFile);
  relp_export->add_option("--data", r_data, "Relation pairs (word1 word2 label)")->required()->check(CLI::ExistingFile);
  relp_export->add_option("--out", r_out, "Feature file")->required();
  auto* relp_base = app.add_subcommand("relp-baseline", "Cross-validated logistic regression on features");
  std::string r_features;
  BaselineOptions r_opt;
  relp_base->add_option("--features", r_features, "Feature file")->required()->check(CLI::ExistingFile);
  relp_base->add_option("--seed", r_opt.seed, "Seed")->default_val(0);
  relp_base->add_option("--runs", r_opt.runs, "Independent runs")->default_val(5);
  relp_base->add_option("--folds", r_opt.folds, "Folds")->default_val(5);
  relp_base->add_option("--epochs", r_opt.epochs, "Epochs")->default_val(100);

  // cka-self / cka-biling
  auto* cka_self = app.add_subcommand("cka-self", "Layer-by-layer CKA within one language");
  StoreArgs c_store, c_tgt;
  std::string c_words, c_family, c_out, c_json, c_csv;
  cka_self->add_option("--store", c_store.store, "Token store")->required()->check(CLI::ExistingFile);
  cka_self->add_option("--store-iso,--backoff", c_store.backoff, "Isolated-word store (AOC)")->check(CLI::ExistingFile);
  cka_self->add_option("--words", c_words, "Word list")->required()->check(CLI::ExistingFile);
  auto* cka_biling = app.add_subcommand("cka-biling", "CKA between translation (or random) pairs");
  std::string c_pairs;
  std::optional<std::size_t> c_random;
  std::uint64_t c_seed = 0;
  bool c_all_layers = false;
  cka_biling->add_option("--src-store", c_store.store, "Source token store")->required()->check(CLI::ExistingFile);
  cka_biling->add_option("--src-store-iso", c_store.backoff, "Source isolated-word store")->check(CLI::ExistingFile);
  cka_biling->add_option("--tgt-store", c_tgt.store, "Target token store")->required()->check(CLI::ExistingFile);
  cka_biling->add_option("--tgt-store-iso", c_tgt.backoff, "Target isolated-word store")->check(CLI::ExistingFile);
  cka_biling->add_option("--pairs", c_pairs, "Translation pairs")->required()->check(CLI::ExistingFile);
  cka_biling->add_option("--random", c_random, "Use N random pairs instead of the translations");
  cka_biling->add_option("--seed", c_seed, "Seed for random pairs")->default_val(0);
  cka_biling->add_flag("--all-layers", c_all_layers, "Compare every source layer with every target layer");
  for (auto* sub : {cka_self, cka_biling}) {
    sub->add_option("--config,--family", c_family, "Extraction, layer part optional, e.g. mono.iso.nospec")
        ->default_val("mono.iso.nospec");
    sub->add_option("--out", c_out, "Output prefix: writes PREFIX.json and PREFIX.csv");
    sub->add_option("--out-json", c_json, "Result JSON (overrides --out)");
    sub->add_option("--out-csv", c_csv, "Result matrix as CSV (overrides --out)");
  }

  // run-grid
  auto* grid = app.add_subcommand("run-grid", "Evaluate every configuration listed in a grid file");
  std::string g_file, g_out;
  std::optional<std::uint64_t> g_seed;
  grid->add_option("grid", g_file, "Grid file")->required()->check(CLI::ExistingFile);
  grid->add_option("--out", g_out, "Override the grid's output directory");
  grid->add_option("--seed", g_seed, "Override the grid's seed");

  // plot-data
  auto* plot = app.add_subcommand("plot-data", "Long-format CSV for plotting");
  std::string p_results, p_cka, p_prefix, p_metric, p_out;
  std::vector<std::string> p_tasks, p_langs;
  auto* p_res_opt = plot->add_option("--results", p_results, "results.csv from run-grid")->check(CLI::ExistingFile);
  plot->add_option("--cka", p_cka, "CKA result JSON")->check(CLI::ExistingFile)->excludes(p_res_opt);
  plot->add_option("--task", p_tasks, "Tasks to keep");
  plot->add_option("--config-prefix", p_prefix, "Keep configs starting with this");
  plot->add_option("--language", p_langs, "Languages or pairs to keep");
  plot->add_option("--metric", p_metric, "Metric to keep");
  plot->add_option("--out", p_out, "Output file (default stdout)");

  CLI11_PARSE(app, argc, argv);

  auto cka_outputs = [&]() -> std::pair<std::string, std::string> {
    const std::string json_path = !c_json.empty() ? c_json : c_out.empty() ? "" : c_out + ".json";
    const std::string csv_path = !c_csv.empty() ? c_csv : c_out.empty() ? "" : c_out + ".csv";
    if (json_path.empty() || csv_path.empty()) fail(ErrorKind::kInvalidArgument, "give --out or both --out-json and --out-csv");
    return {json_path, csv_path};
  };

  try {
    if (*distill) {
      const auto config = parse_config_id(d_config);
      const auto m = build_matrix(Vocabulary::load(d_vocab), d_store.open(), config, BuildOptions{workers});
      if (fs::path(d_out).extension() == ".lxtm")
        save_binary(m, d_out);
      else
        save_text(m, d_out);
      print({{"config", to_config_id(config)}, {"words", m.vocabulary().size()}, {"dim", m.dim()}, {"out", d_out}});
    } else if (*lsim) {
      const auto res = eval_lsim(load_matrix(m_matrix), load_similarity_pairs(m_data));
      print({{"spearman_rho", res.rho}, {"covered", res.covered}, {"total", res.total}});
    } else if (*wa) {
      const auto res = eval_analogy(load_matrix(m_matrix), load_analogy_questions(m_data), workers);
      json per = json::object();
      for (const auto& [cat, c] : res.per_category)
        per[cat] = {{"correct", c.correct}, {"evaluable", c.evaluable}, {"total", c.total}};
      print({{"p_at_1", res.p_at_1},
             {"category_macro_p_at_1", res.category_macro_p_at_1},
             {"evaluable", res.counts.evaluable},
             {"total", res.counts.total},
             {"categories", per}});
    } else if (*bli) {
      const auto src = load_matrix(x_src), tgt = load_matrix(x_tgt);
      const auto train = load_lexicon(x_train, LexiconSplit::kTrain);
      const auto test = load_lexicon(x_test, LexiconSplit::kTest);
      check_disjoint(train, test);
      const auto s = NormalizedSpace::from(src), t = NormalizedSpace::from(tgt);
      const auto align = align_spaces(s, t, train);
      const auto res = eval_bli(s, t, align.map, test, workers);
      print({{"mrr", res.mrr},
             {"covered", res.covered},
             {"total", res.total},
             {"train_pairs_used", align.pairs_used},
             {"mapping_pipeline", kMappingPipeline}});
    } else if (*clir) {
      const auto s = NormalizedSpace::from(load_matrix(x_src)), t = NormalizedSpace::from(load_matrix(x_tgt));
      const auto align = align_spaces(s, t, load_lexicon(x_train, LexiconSplit::kTrain));
      ClirOptions opt;
      opt.formula = x_idf == "plain" ? IdfFormula::kPlain : IdfFormula::kSmooth;
      opt.workers = workers;
      const auto res = eval_clir(load_collection(x_collection), s, t, align.map, opt);
      for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
      print({{"map", res.map_score},
             {"queries", res.average_precision.size()},
             {"zero_queries", res.zero_queries},
             {"average_precision", res.average_precision}});
    } else if (*relp_export) {
      const auto s = export_relp_features(load_matrix(r_matrix), load_relation_pairs(r_data), r_out);
      print({{"written", s.written}, {"skipped", s.skipped}, {"total", s.total}, {"out", r_out}});
    } else if (*relp_base) {
      r_opt.workers = workers;
      const auto res = train_relation_baseline(load_relp_features(r_features), r_opt);
      print({{"mean_micro_f1", res.mean_micro_f1},
             {"stdev_micro_f1", res.stdev_micro_f1},
             {"run_micro_f1", res.run_micro_f1}});
    } else if (*cka_self) {
      const auto c = parse_family(c_family);
      const auto words = read_words(c_words);
      const auto [json_path, csv_path] = cka_outputs();
      const auto res = self_similarity(words, c_store.open(), c.context, c.policy, {{}, workers});
      save_cka_result(res, json_path, csv_path);
      print(cka_summary(res));
    } else if (*cka_biling) {
      const auto c = parse_family(c_family);
      const auto [json_path, csv_path] = cka_outputs();
      const auto shape = c_all_layers ? CorrespondenceShape::kAllLayers : CorrespondenceShape::kSameLayer;
      const auto lex = load_lexicon(c_pairs, LexiconSplit::kTest);
      const auto pairs = first_targets(lex);
      CkaResult res;
      if (c_random) {
        std::vector<std::string> src_words, tgt_words;
        for (const auto& [s, t] : pairs) {
          src_words.push_back(s);
          tgt_words.push_back(t);
        }
        res = random_pair_baseline(c_store.open(), c_tgt.open(), src_words, tgt_words, *c_random, c_seed, c.context,
                                   c.policy, shape, {{}, workers});
      } else {
        res = bilingual_correspondence(c_store.open(), c_tgt.open(), pairs, c.context, c.policy, shape,
                                       {{}, workers});
      }
      save_cka_result(res, json_path, csv_path);
      print(cka_summary(res));
    } else if (*grid) {
      auto spec = load_grid_spec(g_file);
      if (app.get_option("--workers")->count() > 0) spec.workers = workers;
      if (!g_out.empty()) spec.output = g_out;
      if (g_seed) spec.seed = *g_seed;
      const auto summary = run_grid(spec);
      print({{"rows", summary.rows.size()},
             {"failed_rows", summary.failed_rows},
             {"matrices_built", summary.matrices_built},
             {"matrices_cached", summary.matrices_cached},
             {"output", spec.output.string()}});
      return summary.failed_rows == 0 ? 0 : 3;
    } else if (*plot) {
      if (!p_cka.empty()) {
        write_output(emit_plot_data(CkaResult::from_json(json::parse(read_file(p_cka)))), p_out);
      } else {
        if (p_results.empty()) fail(ErrorKind::kInvalidArgument, "plot-data needs --results or --cka");
        PlotSelector sel;
        for (const auto& t : p_tasks) sel.tasks.insert(parse_task(t));
        sel.config_prefix = p_prefix;
        sel.languages.insert(p_langs.begin(), p_langs.end());
        sel.metric = p_metric;
        write_output(emit_plot_data(parse_results_csv(read_file(p_results)), sel), p_out);
      }
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
