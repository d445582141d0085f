#pragma once

// Configuration grid: distil one matrix per (config, language), run every
// requested task on it and write flat result tables.
//
// Grid files are "key = value" lines; '#' starts a comment and relative
// paths resolve against the grid file's directory.
//
//   output   = results/           where tables and the matrix cache go
//   seed     = 0
//   workers  = 4                  configs evaluated concurrently
//   tasks    = LSIM, WA, BLI, CLIR, RELP, CKA
//   configs  = mono.iso.nospec.l0, mono.aoc-100.nospec.avg_le8   (repeatable)
//   store.<lang>.<mono|multi>.<iso|aoc> = path
//   vocab.<lang>        = path    one word per line
//   lsim.<lang>         = path    word similarity pairs
//   wa.<lang>           = path    analogy file or directory
//   relp.<lang>         = path    relation pairs
//   bli.<src>-<tgt>.train / .test = path
//   clir.<src>-<tgt>    = dir     documents.tsv, queries.tsv, qrels.tsv
//   cka.<src>-<tgt>     = path    pairs for CKA (default: the BLI test lexicon)
//   relp_runs, relp_folds, relp_epochs = integers
//   idf      = smooth | plain

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lexprobe/cka_analysis.hpp"
#include "lexprobe/distillation.hpp"
#include "lexprobe/eval_xling.hpp"

namespace lexprobe {

enum class Task { kLsim, kWa, kBli, kClir, kRelp, kCka };

// Canonical order, which is also the order rows are grouped in.
inline constexpr Task kAllTasks[] = {Task::kLsim, Task::kWa, Task::kBli, Task::kClir, Task::kRelp, Task::kCka};

const char* to_string(Task task);
Task parse_task(std::string_view s);
std::size_t task_rank(Task task);
bool is_bilingual(Task task);

struct LanguagePair {
  std::string source;
  std::string target;

  std::string id() const { return source + "-" + target; }
  auto operator<=>(const LanguagePair&) const = default;
};

struct StorePaths {
  std::optional<std::filesystem::path> iso;
  std::optional<std::filesystem::path> aoc;
};

struct LanguageInputs {
  std::map<SourceKind, StorePaths> stores;
  std::optional<std::filesystem::path> vocab;
  std::optional<std::filesystem::path> lsim;
  std::optional<std::filesystem::path> wa;
  std::optional<std::filesystem::path> relp;
};

struct PairInputs {
  std::optional<std::filesystem::path> bli_train;
  std::optional<std::filesystem::path> bli_test;
  std::optional<std::filesystem::path> clir;
  std::optional<std::filesystem::path> cka;
};

struct GridSpec {
  std::filesystem::path output;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::vector<Task> tasks;            // canonical order, no duplicates
  std::vector<std::string> configs;   // canonical ids, listed order, no duplicates
  std::map<std::string, LanguageInputs> languages;
  std::map<LanguagePair, PairInputs> pairs;
  std::size_t relp_runs = 5;
  std::size_t relp_folds = 5;
  std::size_t relp_epochs = 100;
  IdfFormula idf = IdfFormula::kSmooth;
};

// Parses the text format above. Syntax errors are kParse with the line.
GridSpec parse_grid_spec(std::string_view text, const std::filesystem::path& base_dir = {});
GridSpec load_grid_spec(const std::filesystem::path& path);

// Spec-level checks run before any evaluation: every referenced path
// exists, every config parses against its store's layer count, and every
// (config, language) that a task needs has its stores and vocabulary.
// Throws on the first problem.
void validate_grid_spec(const GridSpec& spec);

struct ResultRow {
  std::string config;
  Task task = Task::kLsim;
  std::string language;  // "en" or "en-de"
  std::string metric;
  std::optional<double> value;  // empty when the row failed
  std::optional<double> coverage;
  std::string provenance;  // SHA-256 over the inputs that determine the value
  std::string error;
  double wall_seconds = 0.0;  // written to the timings table only

  bool ok() const { return error.empty(); }
};

struct GridSummary {
  std::vector<ResultRow> rows;  // grid order
  std::size_t failed_rows = 0;
  std::size_t matrices_built = 0;
  std::size_t matrices_cached = 0;
  nlohmann::json correlations = nlohmann::json::array();
};

// Runs the grid and writes results.csv, results.json and timings.csv into
// spec.output (matrix cache under spec.output/cache). results.csv and
// results.json depend only on the inputs.
GridSummary run_grid(const GridSpec& spec);

std::string results_csv(const std::vector<ResultRow>& rows);
std::vector<ResultRow> parse_results_csv(std::string_view text);
nlohmann::json results_json(const GridSummary& summary);

// --- plot data ---------------------------------------------------------------

struct PlotSelector {
  std::set<Task> tasks;           // empty = all
  std::string config_prefix;      // rows whose config starts with this
  std::set<std::string> languages;
  std::string metric;             // empty = all
};

// Long format "config,x,series,value": config is the family id, x the layer
// id, series "TASK:language:metric". Rows are grouped by task in canonical
// order, keeping the input order inside a task; failed rows are skipped.
// Throws kEmptySelection when nothing matches.
std::string emit_plot_data(const std::vector<ResultRow>& rows, const PlotSelector& selector);

// One line per heatmap cell: config, x = row label, series = column label.
std::string emit_plot_data(const CkaResult& result);

}  // namespace lexprobe
