#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lexprobe/config_id.hpp"
#include "lexprobe/embedding_matrix.hpp"
#include "lexprobe/error.hpp"
#include "lexprobe/grid.hpp"
#include "lexprobe/random.hpp"
#include "lexprobe/text.hpp"
#include "test_support.hpp"

using namespace lexprobe;
using namespace lexprobe::testing;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

GridSpec golden_spec(const fs::path& out, const std::vector<std::string>& configs, const std::string& tasks) {
  return parse_grid_spec(golden_grid_text(out, configs, tasks));
}

ResultRow make_row(const std::string& config, Task task, const std::string& lang, const std::string& metric,
                   std::optional<double> value) {
  ResultRow r;
  r.config = config;
  r.task = task;
  r.language = lang;
  r.metric = metric;
  r.value = value;
  if (!value) r.error = "boom";
  return r;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("grid spec parsing") {
  const auto spec = load_grid_spec(golden_dir() / "grid.txt");
  CHECK(spec.output == golden_dir() / "grid-output");
  CHECK(spec.seed == 7);
  CHECK(spec.tasks == std::vector<Task>{Task::kLsim, Task::kWa, Task::kBli, Task::kClir});
  CHECK(spec.configs.size() == 3);
  CHECK(spec.configs[1] == "mono.aoc-3.all.avg_le2");
  REQUIRE(spec.languages.count("en") == 1);
  CHECK(*spec.languages.at("en").vocab == golden_dir() / "en.vocab");
  REQUIRE(spec.pairs.count({"en", "de"}) == 1);
  CHECK(*spec.pairs.at({"en", "de"}).clir == golden_dir() / "clir.en-de");
  CHECK_NOTHROW(validate_grid_spec(spec));

  const auto defaults = parse_grid_spec("output = x\nconfigs = mono.iso.nospec.l0 # trailing comment\n");
  CHECK(defaults.tasks.size() == std::size(kAllTasks));
  CHECK(defaults.idf == IdfFormula::kSmooth);

  const auto dup = parse_grid_spec("output = x\ntasks = wa, lsim, WA\nconfigs = mono.iso.nospec.l0\nconfig = mono.iso.nospec.l0\n");
  CHECK(dup.tasks == std::vector<Task>{Task::kLsim, Task::kWa});
  CHECK(dup.configs.size() == 1);

  CHECK_THROWS_AS(parse_grid_spec("configs = mono.iso.nospec.l0\n"), Error);
  CHECK_THROWS_AS(parse_grid_spec("output = x\n"), Error);
  CHECK_THROWS_AS(parse_grid_spec("output = x\nconfigs = mono.iso.nospec.l0\nbogus = 1\n"), Error);
  CHECK_THROWS_AS(parse_grid_spec("output = x\nconfigs = mono.iso.nospec.l0\nno equals sign\n"), Error);
  CHECK_THROWS_AS(parse_grid_spec("output = x\nconfigs = nonsense\n"), Error);
  CHECK_THROWS_AS(parse_grid_spec("output = x\nconfigs = mono.iso.nospec.l0\ntasks = LSIM, XYZ\n"), Error);
}

TEST_CASE("validation rejects missing inputs before any evaluation") {
  TempDir dir;
  auto text = golden_grid_text(dir / "out", {"mono.iso.nospec.l0"}, "LSIM, BLI");
  auto missing = parse_grid_spec(text + "lsim.en = " + (dir / "absent.txt").string() + "\n");
  CHECK_THROWS_AS(validate_grid_spec(missing), Error);
  CHECK_THROWS_AS(run_grid(missing), Error);
  CHECK_FALSE(fs::exists(dir / "out" / "results.csv"));

  auto too_deep = golden_spec(dir / "out", {"mono.iso.nospec.l9"}, "LSIM");
  CHECK_THROWS_AS(validate_grid_spec(too_deep), Error);

  auto no_vocab = golden_spec(dir / "out", {"mono.iso.nospec.l0"}, "LSIM");
  no_vocab.languages.at("en").vocab.reset();
  CHECK_THROWS_AS(validate_grid_spec(no_vocab), Error);

  auto no_aoc = golden_spec(dir / "out", {"mono.aoc-3.nospec.l0"}, "LSIM");
  no_aoc.languages.at("en").stores.at(SourceKind::kMono).aoc.reset();
  CHECK_THROWS_AS(validate_grid_spec(no_aoc), Error);

  auto no_train = golden_spec(dir / "out", {"mono.iso.nospec.l0"}, "BLI");
  no_train.pairs.at({"en", "de"}).bli_train.reset();
  CHECK_THROWS_AS(validate_grid_spec(no_train), Error);
}

TEST_CASE("single config and task matches the oracle") {
  TempDir dir;
  const auto expected = golden_expected();
  const auto summary = run_grid(golden_spec(dir / "out", {"mono.aoc-3.withcls.avg_ge1"}, "LSIM"));
  REQUIRE(summary.rows.size() == 1);
  const auto& r = summary.rows[0];
  CHECK(r.ok());
  CHECK(r.config == "mono.aoc-3.withcls.avg_ge1");
  CHECK(r.language == "en");
  CHECK(r.metric == "spearman_rho");
  const auto& e = expected["configs"]["mono.aoc-3.withcls.avg_ge1"];
  CHECK(std::abs(*r.value - e["lsim"].get<double>()) < 1e-6);
  CHECK(std::abs(*r.coverage - e["lsim_coverage"].get<double>()) < 1e-6);
  CHECK(fs::exists(dir / "out" / "results.csv"));
  CHECK(fs::exists(dir / "out" / "results.json"));
  CHECK(fs::exists(dir / "out" / "timings.csv"));
}

TEST_CASE("all metric rows match the oracle and reruns are byte-identical") {
  TempDir dir;
  const auto expected = golden_expected();
  const std::vector<std::string> configs = {"mono.iso.nospec.l0", "mono.aoc-3.all.avg_le2", "mono.iso.withcls.avg_ge1"};
  const auto spec = golden_spec(dir / "out", configs, "LSIM, WA, BLI, CLIR");
  const auto first = run_grid(spec);
  CHECK(first.rows.size() == 12);
  CHECK(first.failed_rows == 0);
  CHECK(first.matrices_built == 6);
  const std::map<Task, std::string> key = {
      {Task::kLsim, "lsim"}, {Task::kWa, "wa"}, {Task::kBli, "bli"}, {Task::kClir, "clir"}};
  for (const auto& r : first.rows) {
    REQUIRE(r.ok());
    CHECK(std::abs(*r.value - expected["configs"][r.config][key.at(r.task)].get<double>()) < 1e-6);
  }
  // Rows come grouped by task.
  for (std::size_t i = 1; i < first.rows.size(); ++i)
    CHECK(task_rank(first.rows[i - 1].task) <= task_rank(first.rows[i].task));

  const std::string csv1 = slurp(dir / "out" / "results.csv");
  const std::string json1 = slurp(dir / "out" / "results.json");
  std::map<fs::path, std::string> cache;
  for (const auto& e : fs::directory_iterator(dir / "out" / "cache")) cache[e.path()] = slurp(e.path());
  CHECK(cache.size() == 6);

  const auto second = run_grid(spec);
  CHECK(second.matrices_cached == 6);
  CHECK(second.matrices_built == 0);
  CHECK(slurp(dir / "out" / "results.csv") == csv1);
  CHECK(slurp(dir / "out" / "results.json") == json1);
  for (std::size_t i = 0; i < first.rows.size(); ++i) CHECK(first.rows[i].provenance == second.rows[i].provenance);

  // A fresh output directory rebuilds bitwise-identical cache entries.
  const auto third = run_grid(golden_spec(dir / "fresh", configs, "LSIM, WA, BLI, CLIR"));
  CHECK(third.matrices_built == 6);
  for (const auto& [path, bytes] : cache) CHECK(slurp(dir / "fresh" / "cache" / path.filename()) == bytes);
  CHECK(slurp(dir / "fresh" / "results.csv") == csv1);

  // More workers do not change the output.
  auto parallel = golden_spec(dir / "par", configs, "LSIM, WA, BLI, CLIR");
  parallel.workers = 3;
  run_grid(parallel);
  CHECK(slurp(dir / "par" / "results.csv") == csv1);
}

TEST_CASE("a corrupt cache entry is rebuilt") {
  TempDir dir;
  const auto spec = golden_spec(dir / "out", {"mono.iso.nospec.l1"}, "LSIM");
  run_grid(spec);
  for (const auto& e : fs::directory_iterator(dir / "out" / "cache")) {
    std::ofstream(e.path(), std::ios::binary | std::ios::trunc) << "garbage";
  }
  const auto again = run_grid(spec);
  CHECK(again.matrices_built == 1);
  CHECK(again.rows[0].ok());
}

TEST_CASE("a failing row does not stop the grid") {
  TempDir dir;
  // A lexicon with no in-vocabulary pairs makes alignment fail for BLI and
  // CLIR while the monolingual rows still succeed.
  std::ofstream(dir / "bad.tsv") << "zzz\tyyy\n";
  auto spec = golden_spec(dir / "out", {"mono.iso.nospec.l0"}, "LSIM, BLI, CLIR");
  spec.pairs.at({"en", "de"}).bli_train = dir / "bad.tsv";
  const auto summary = run_grid(spec);
  REQUIRE(summary.rows.size() == 3);
  CHECK(summary.failed_rows == 2);
  CHECK(summary.rows[0].ok());
  CHECK_FALSE(summary.rows[1].ok());
  CHECK_FALSE(summary.rows[1].value.has_value());
  CHECK_FALSE(summary.rows[2].error.empty());

  const auto parsed = parse_results_csv(slurp(dir / "out" / "results.csv"));
  REQUIRE(parsed.size() == 3);
  CHECK(parsed[1].error == summary.rows[1].error);
  const auto j = nlohmann::json::parse(slurp(dir / "out" / "results.json"));
  CHECK(j["failed_rows"] == 2);
}

TEST_CASE("results CSV round trip") {
  std::vector<ResultRow> rows = {make_row("mono.iso.nospec.l0", Task::kLsim, "en", "spearman_rho", 0.1 + 0.2),
                                 make_row("mono.iso.nospec.l1", Task::kBli, "en-de", "mrr", std::nullopt)};
  rows[0].coverage = 2.0 / 3.0;
  rows[0].provenance = "abc";
  rows[1].error = "quoted \"error\", with comma\nand newline";
  const auto back = parse_results_csv(results_csv(rows));
  REQUIRE(back.size() == 2);
  CHECK(*back[0].value == rows[0].value);
  CHECK(*back[0].coverage == rows[0].coverage);
  CHECK(back[0].provenance == "abc");
  CHECK(back[0].task == Task::kLsim);
  CHECK_FALSE(back[1].value.has_value());
  CHECK(back[1].error == rows[1].error);
  CHECK(results_csv(back) == results_csv(rows));
  CHECK_THROWS_AS(parse_results_csv("not,a,header\n"), Error);
}

TEST_CASE("plot data") {
  std::vector<ResultRow> rows;
  const std::vector<std::string> schemes = {"l0", "l1", "avg_le0", "avg_le1", "avg_ge0", "avg_ge1"};
  for (const auto& s : schemes) rows.push_back(make_row("mono.iso.nospec." + s, Task::kBli, "en-de", "mrr", 0.5));
  rows.push_back(make_row("mono.iso.nospec.l0", Task::kLsim, "en", "spearman_rho", 0.25));
  rows.push_back(make_row("mono.iso.nospec.l1", Task::kLsim, "en", "spearman_rho", std::nullopt));
  rows.push_back(make_row("mono.iso.nospec.l1", Task::kWa, "en", "p_at_1", 0.125));
  rows.push_back(make_row("mono.aoc-3.all.l0", Task::kLsim, "en", "spearman_rho", 0.75));

  PlotSelector bli;
  bli.tasks = {Task::kBli};
  const auto out = emit_plot_data(rows, bli);
  CHECK(out.starts_with("config,x,series,value\n"));
  CHECK(count_lines(out) == 1 + schemes.size());
  CHECK(out.find("mono.iso.nospec,avg_le1,BLI:en-de:mrr,0.5\n") != std::string::npos);

  // Everything: grouped by task in canonical order, failed rows skipped.
  const auto all = emit_plot_data(rows, {});
  std::vector<std::string> lines;
  std::istringstream ss(all);
  for (std::string line; std::getline(ss, line);) lines.push_back(line);
  REQUIRE(lines.size() == 1 + 6 + 2 + 1);
  CHECK(lines[1] == "mono.iso.nospec,l0,LSIM:en:spearman_rho,0.25");
  CHECK(lines[2] == "mono.aoc-3.all,l0,LSIM:en:spearman_rho,0.75");
  CHECK(lines[3] == "mono.iso.nospec,l1,WA:en:p_at_1,0.125");
  CHECK(lines[4].find("BLI") != std::string::npos);

  PlotSelector prefix;
  prefix.config_prefix = "mono.aoc";
  CHECK(count_lines(emit_plot_data(rows, prefix)) == 2);
  PlotSelector none;
  none.languages = {"fi"};
  CHECK_THROWS_AS(emit_plot_data(rows, none), Error);

  CkaResult heat;
  heat.config = "iso.nospec";
  heat.scores = Matrix::Constant(13, 13, 0.5);
  heat.axis_a = layer_labels(13);
  heat.axis_b = layer_labels(13);
  const auto cells = emit_plot_data(heat);
  CHECK(count_lines(cells) == 1 + 169);
  CHECK(cells.find("iso.nospec,L12,L3,0.5\n") != std::string::npos);
}

TEST_CASE("cached matrices equal freshly distilled ones bitwise") {
  TempDir dir;
  const std::string id = "mono.aoc-3.withcls.avg_le1";
  run_grid(golden_spec(dir / "out", {id}, "LSIM"));
  const auto config = parse_config_id(id);
  const StoreSet stores{open_store(golden_dir() / "en.aoc.lxts"), open_store(golden_dir() / "en.iso.lxts")};
  const auto fresh = build_matrix(Vocabulary::load(golden_dir() / "en.vocab"), stores, config);
  std::size_t entries = 0;
  for (const auto& e : fs::directory_iterator(dir / "out" / "cache")) {
    const auto cached = load_binary(e.path());
    REQUIRE(cached.vocabulary() == fresh.vocabulary());
    for (std::size_t i = 0; i < fresh.vocabulary().size(); ++i) {
      const auto a = cached.row(i), b = fresh.row(i);
      CHECK(std::memcmp(a.data(), b.data(), a.size_bytes()) == 0);
    }
    ++entries;
  }
  CHECK(entries == 1);
}

TEST_CASE("property: plot data matches a sorted oracle") {
  std::mt19937_64 rng(31);
  const std::vector<std::string> metrics = {"spearman_rho", "p_at_1", "mrr", "map", "micro_f1", "cka"};
  for (int t = 0; t < 50; ++t) {
    std::vector<ResultRow> rows;
    const std::size_t n = 1 + uniform_index(rng, 30);
    for (std::size_t i = 0; i < n; ++i) {
      const auto task = kAllTasks[uniform_index(rng, std::size(kAllTasks))];
      const std::string config = "mono.iso.nospec.l" + std::to_string(uniform_index(rng, 13));
      const bool ok = uniform_index(rng, 5) != 0;
      rows.push_back(make_row(config, task, is_bilingual(task) ? "en-de" : "en", metrics[task_rank(task)],
                              ok ? std::optional<double>(double(i) / 64.0) : std::nullopt));
    }
    auto sorted = rows;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const ResultRow& a, const ResultRow& b) { return task_rank(a.task) < task_rank(b.task); });
    std::string oracle = "config,x,series,value\n";
    for (const auto& r : sorted) {
      if (!r.ok()) continue;
      const auto c = parse_config_id(r.config);
      oracle += to_family_id(c) + "," + to_layer_id(c.layers) + "," + to_string(r.task) + ":" + r.language + ":" +
                r.metric + "," + text::format_double(*r.value) + "\n";
    }
    if (oracle == "config,x,series,value\n") {
      CHECK_THROWS_AS(emit_plot_data(rows, {}), Error);
    } else {
      CHECK(emit_plot_data(rows, {}) == oracle);
    }
  }
}
