#include <doctest.h>

#include <fstream>

#include "lexprobe/error.hpp"
#include "lexprobe/eval_mono.hpp"
#include "test_support.hpp"

using namespace lexprobe;
using namespace lexprobe::testing;

namespace {

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream(p) << content;
}

// Exhaustive analogy search in double, no batching.
std::int64_t brute_force_analogy(const TypeEmbeddingMatrix& m, std::size_t a, std::size_t b, std::size_t c) {
  std::vector<double> t(m.dim());
  for (std::size_t k = 0; k < m.dim(); ++k) t[k] = double(m.row(c)[k]) - m.row(a)[k] + m.row(b)[k];
  std::int64_t best = -1;
  double best_score = -2.0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (r == a || r == b || r == c) continue;
    std::vector<double> row(m.row(r).begin(), m.row(r).end());
    const double s = numerics::cosine(row, t);
    if (s > best_score) {
      best_score = s;
      best = static_cast<std::int64_t>(r);
    }
  }
  return best;
}

}  // namespace

TEST_CASE("word similarity: perfect ordering and coverage") {
  Matrix m(4, 2);
  m << 1, 0, 0.9, 0.1, 0.5, 0.5, 0, 1;
  const auto matrix = make_matrix({"a", "b", "c", "d"}, m);
  // cos(a,b) > cos(a,c) > cos(a,d); gold scores in the same order.
  const std::vector<SimilarityPair> pairs = {
      {"a", "b", 9.0}, {"a", "c", 5.0}, {"a", "d", 1.0}, {"a", "zzz", 3.0}};
  const auto r = eval_lsim(matrix, pairs);
  CHECK(r.rho == doctest::Approx(1.0));
  CHECK(r.covered == 3);
  CHECK(r.total == 4);
  CHECK(r.coverage() == doctest::Approx(0.75));

  const std::vector<SimilarityPair> one = {{"a", "b", 1.0}, {"x", "y", 2.0}};
  CHECK_THROWS_AS(eval_lsim(matrix, one), Error);
}

TEST_CASE("word similarity matches a brute-force oracle and ignores scale") {
  std::mt19937_64 rng(4);
  const auto words = numbered_words(30);
  const Matrix m = random_matrix(rng, 30, 6);
  const auto matrix = make_matrix(words, m);
  std::vector<SimilarityPair> pairs;
  std::vector<double> gold, cos;
  for (int i = 0; i < 40; ++i) {
    const auto u = rng() % 30, v = rng() % 30;
    if (u == v) continue;
    const double g = double(rng() % 5);  // many ties
    pairs.push_back({words[u], words[v], g});
    gold.push_back(g);
    cos.push_back(numerics::cosine(matrix.row(u), matrix.row(v)));
  }
  const double oracle = brute_force_pearson(brute_force_ranks(gold), brute_force_ranks(cos));
  CHECK(std::abs(eval_lsim(matrix, pairs).rho - oracle) < 1e-12);

  const auto scaled = make_matrix(words, 3.5 * m);
  CHECK(std::abs(eval_lsim(scaled, pairs).rho - oracle) < 1e-6);
}

TEST_CASE("similarity loader tolerates a header and lowercases") {
  TempDir dir;
  write_file(dir / "sim.txt", "word1\tword2\tscore\nCat\tdog\t7.5\n\nsun moon 2\n");
  const auto pairs = load_similarity_pairs(dir / "sim.txt");
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].word1 == "cat");
  CHECK(pairs[0].gold_score == 7.5);
  write_file(dir / "bad.txt", "a b 1\nc d x\n");
  CHECK_THROWS_AS(load_similarity_pairs(dir / "bad.txt"), Error);
  CHECK_THROWS_AS(load_similarity_pairs(dir / "missing.txt"), Error);
}

TEST_CASE("analogy excludes the query words") {
  Matrix m(5, 2);
  m << 1, 0,   // a
      0, 1,    // b
      1, 0.1,  // c
      0.1, 1,  // d
      1, -1;   // x
  const auto matrix = make_matrix({"a", "b", "c", "d", "x"}, m);
  // Target (0, 1.1) is closest to b itself; with b excluded, d wins.
  const std::vector<AnalogyQuestion> q = {{"a", "b", "c", {"d"}, "toy"}};
  const auto r = eval_analogy(matrix, q);
  CHECK(r.predictions[0] == 3);
  CHECK(r.p_at_1 == 1.0);
  CHECK(r.counts.correct == 1);
}

TEST_CASE("analogy agrees with exhaustive search and is rotation invariant") {
  std::mt19937_64 rng(17);
  const auto words = numbered_words(60);
  const Matrix m = random_matrix(rng, 60, 10);
  const auto matrix = make_matrix(words, m);
  std::vector<AnalogyQuestion> qs;
  std::vector<std::array<std::size_t, 3>> idx;
  while (qs.size() < 200) {
    const std::size_t a = rng() % 60, b = rng() % 60, c = rng() % 60;
    if (a == b || a == c || b == c) continue;
    qs.push_back({words[a], words[b], words[c], {words[rng() % 60]}, "c" + std::to_string(qs.size() % 3)});
    idx.push_back({a, b, c});
  }
  const auto r = eval_analogy(matrix, qs, 3);
  for (std::size_t i = 0; i < qs.size(); ++i) {
    CHECK(r.predictions[i] == brute_force_analogy(matrix, idx[i][0], idx[i][1], idx[i][2]));
  }
  const auto rotated = eval_analogy(make_matrix(words, m * random_orthogonal(rng, 10)), qs);
  CHECK(rotated.predictions == r.predictions);
  CHECK(r.per_category.size() == 3);
}

TEST_CASE("analogy coverage accounting") {
  Matrix m(4, 2);
  m << 1, 0, 0, 1, 1, 1, -1, 1;
  const auto matrix = make_matrix({"a", "b", "c", "d"}, m);
  const std::vector<AnalogyQuestion> qs = {
      {"a", "b", "c", {"d"}, "x"}, {"a", "b", "oov", {"d"}, "x"}, {"oov", "b", "c", {"a"}, "y"}};
  const auto r = eval_analogy(matrix, qs);
  CHECK(r.counts.total == 3);
  CHECK(r.counts.evaluable == 1);
  CHECK(r.coverage() == doctest::Approx(1.0 / 3.0));
  CHECK(r.predictions[1] == -1);
  CHECK(r.per_category.at("y").evaluable == 0);
  const std::vector<AnalogyQuestion> none = {qs[1]};
  CHECK_THROWS_AS(eval_analogy(matrix, none), Error);
}

TEST_CASE("analogy loaders") {
  TempDir dir;
  write_file(dir / "google.txt", ": capitals\nAthens Greece Berlin Germany\nx y z a/b\n: verbs\ngo went see saw\n");
  auto qs = load_analogy_questions(dir / "google.txt");
  REQUIRE(qs.size() == 3);
  CHECK(qs[0].a == "athens");
  CHECK(qs[0].category == "google/capitals");
  CHECK(qs[1].gold == std::vector<std::string>{"a", "b"});
  CHECK(qs[2].category == "google/verbs");

  std::filesystem::create_directories(dir / "bats" / "inflect");
  write_file(dir / "bats" / "inflect" / "plural.txt", "cat\tcats\ndog\tdogs/doggies\nox\toxen\n");
  qs = load_analogy_questions(dir / "bats");
  CHECK(qs.size() == 6);  // 3 * 2 ordered pairs
  CHECK(qs[0].category == "inflect/plural");
  CHECK(qs[0].a == "cat");
  CHECK(qs[0].b == "cats");
  CHECK(qs[0].c == "dog");
  CHECK(qs[0].gold == std::vector<std::string>{"dogs", "doggies"});
}

TEST_CASE("relation features export and reload") {
  TempDir dir;
  Matrix m(3, 4);
  m << 1, 2, 3, 4, 5, 6, 7, 8, -1, -2, -3, -4;
  const auto matrix = make_matrix({"a", "b", "c"}, m);
  const std::vector<RelationPair> pairs = {
      {"a", "b", RelationLabel::kAntonymy}, {"a", "oov", RelationLabel::kSynonymy}, {"c", "a", RelationLabel::kNoRelation}};
  const auto s = export_relp_features(matrix, pairs, dir / "f.bin");
  CHECK(s.written == 2);
  CHECK(s.skipped == 1);
  // preamble + header + 2 * (1 label byte + 8 floats)
  const auto f = load_relp_features(dir / "f.bin");
  REQUIRE(f.size() == 2);
  CHECK(f.dim == 4);
  CHECK(f.labels[0] == 1);
  CHECK(f.labels[1] == 4);
  for (int k = 0; k < 8; ++k) CHECK(f.pairs(0, k) == float(k + 1));
  CHECK(f.pairs(1, 0) == -1.0f);
  CHECK(f.pairs(1, 4) == 1.0f);

  write_file(dir / "rel.tsv", "hot\tcold\tant\ncar\tauto\tsyn\nx\ty\trandom\n");
  const auto loaded = load_relation_pairs(dir / "rel.tsv");
  REQUIRE(loaded.size() == 3);
  CHECK(loaded[2].label == RelationLabel::kNoRelation);
  write_file(dir / "bad.tsv", "a\tb\tcousin\n");
  CHECK_THROWS_AS(load_relation_pairs(dir / "bad.tsv"), Error);
}

TEST_CASE("relation baseline: separable and shuffled data") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t d = 8, n = 500;
  RelationFeatures f;
  f.dim = d;
  f.labels.resize(n);
  f.pairs.resize(n, 2 * d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<std::uint8_t>(i % kRelationClassCount);
    f.labels[i] = label;
    for (std::size_t k = 0; k < 2 * d; ++k) {
      f.pairs(i, k) = float(0.05 * noise(rng) + (k == label ? 5.0 : 0.0));
    }
  }
  BaselineOptions opt;
  opt.epochs = 30;
  opt.workers = 2;
  const auto separable = train_relation_baseline(f, opt);
  CHECK(separable.mean_micro_f1 == doctest::Approx(1.0));
  CHECK(separable.run_micro_f1.size() == 5);

  // Same run twice gives the same numbers.
  CHECK(train_relation_baseline(f, opt).run_micro_f1 == separable.run_micro_f1);

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < 2 * d; ++k) f.pairs(i, k) = float(noise(rng));
  }
  const auto chance = train_relation_baseline(f, opt);
  CHECK(chance.mean_micro_f1 > 0.15);
  CHECK(chance.mean_micro_f1 < 0.25);
  CHECK(chance.stdev_micro_f1 >= 0.0);

  RelationFeatures single = f;
  std::fill(single.labels.begin(), single.labels.end(), 0);
  CHECK_THROWS_AS(train_relation_baseline(single, opt), Error);
}
