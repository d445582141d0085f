#include <doctest.h>

#include <fstream>

#include "lexprobe/error.hpp"
#include "lexprobe/eval_xling.hpp"
#include "test_support.hpp"

using namespace lexprobe;
using namespace lexprobe::testing;

namespace {

BilingualLexicon identity_lexicon(const std::vector<std::string>& words, std::size_t begin, std::size_t end,
                                  LexiconSplit split) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (std::size_t i = begin; i < end; ++i) pairs.emplace_back(words[i], words[i]);
  return make_lexicon(pairs, split);
}

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream(p) << content;
}

// AP straight from the definition: for each relevant doc, precision at its rank.
double brute_force_ap(const std::vector<std::string>& ranking, const std::set<std::string>& relevant) {
  double sum = 0.0;
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    if (!relevant.contains(ranking[i])) continue;
    std::size_t rel_upto = 0;
    for (std::size_t j = 0; j <= i; ++j) rel_upto += relevant.contains(ranking[j]);
    sum += double(rel_upto) / double(i + 1);
  }
  return sum / double(relevant.size());
}

}  // namespace

TEST_CASE("lexicon loading groups repeated sources") {
  TempDir dir;
  write_file(dir / "train.tsv", "Haus\thouse\nhaus\thome\nhund\tdog\nhaus\thouse\n");
  const auto lex = load_lexicon(dir / "train.tsv", LexiconSplit::kTrain);
  REQUIRE(lex.size() == 2);
  CHECK(lex.entries[0].source == "haus");
  CHECK(lex.entries[0].targets == std::vector<std::string>{"house", "home"});
  CHECK(lex.pair_count() == 3);

  write_file(dir / "test.tsv", "katze\tcat\nhund\thound\n");
  const auto test = load_lexicon(dir / "test.tsv", LexiconSplit::kTest);
  CHECK_THROWS_AS(check_disjoint(lex, test), Error);
  write_file(dir / "bad.tsv", "a b c\n");
  CHECK_THROWS_AS(load_lexicon(dir / "bad.tsv", LexiconSplit::kTest), Error);
}

TEST_CASE("mapping normalization pipeline") {
  std::mt19937_64 rng(1);
  Matrix m = random_matrix(rng, 20, 5);
  m.row(3).setZero();
  const Matrix n = normalize_for_mapping(m);
  for (Eigen::Index r = 0; r < n.rows(); ++r) {
    CHECK(n.row(r).norm() == doctest::Approx(r == 3 ? 0.0 : 1.0));
  }
}

TEST_CASE("alignment recovers a known rotation") {
  std::mt19937_64 rng(2);
  const auto words = numbered_words(50);
  const Matrix x = random_matrix(rng, 50, 8);
  const Matrix r = random_orthogonal(rng, 8);
  const auto src = make_matrix(words, x);
  const auto lex = identity_lexicon(words, 0, 50, LexiconSplit::kTrain);

  const auto rotated = align_spaces(src, make_matrix(words, x * r), lex);
  CHECK((rotated.map.w - r).norm() < 1e-6);
  CHECK(rotated.pairs_used == 50);

  const auto self = align_spaces(src, src, lex);
  CHECK((self.map.w - Matrix::Identity(8, 8)).norm() <= 1e-5);

  const auto other = make_matrix(numbered_words(50, "z"), x);
  CHECK_THROWS_AS(align_spaces(src, other, lex), Error);
}

TEST_CASE("alignment beats the identity map on noisy targets") {
  std::mt19937_64 rng(3);
  const auto words = numbered_words(50);
  const Matrix x = random_matrix(rng, 50, 10);
  const Matrix y = x * random_orthogonal(rng, 10) + 0.1 * random_matrix(rng, 50, 10);
  const auto src = NormalizedSpace::from(make_matrix(words, x));
  const auto tgt = NormalizedSpace::from(make_matrix(words, y));
  const auto a = align_spaces(src, tgt, identity_lexicon(words, 0, 50, LexiconSplit::kTrain));
  const double mapped = (src.rows * a.map.w - tgt.rows).norm();
  const double identity = (src.rows - tgt.rows).norm();
  CHECK(mapped <= identity);
  CHECK(a.map.orthogonality_error() < 1e-6);
}

TEST_CASE("BLI examples") {
  std::mt19937_64 rng(4);
  const auto words = numbered_words(30);
  const Matrix x = random_matrix(rng, 30, 6);
  const auto m = make_matrix(words, x);
  const auto lex = identity_lexicon(words, 0, 30, LexiconSplit::kTest);
  const auto r = eval_bli(m, m, numerics::OrthogonalMap::identity(6), lex);
  CHECK(r.mrr == doctest::Approx(1.0));
  CHECK(r.coverage() == 1.0);

  // Gold placed second by construction: each query's gold row is the
  // runner-up, the query row itself is an exact match and ranks first.
  Matrix src(2, 2), tgt(4, 2);
  src << 1, 0, 0, 1;
  tgt << 1, 0, 0.9, 0.1, 0, 1, 0.1, 0.9;
  const std::vector<BliQuery> queries = {{0, {1}}, {1, {3}}};
  const auto second = rank_translations(src, tgt, queries);
  CHECK(second.mrr == doctest::Approx(0.5));
  CHECK(second.ranks == std::vector<std::size_t>{2, 2});

  // Ties go to the lower index; multi-gold takes the best rank.
  Matrix dup(3, 2);
  dup << 0, 1, 1, 0, 1, 0;
  const std::vector<BliQuery> tie = {{0, {2}}, {0, {2, 1}}};
  CHECK(rank_translations(src, dup, tie).ranks == std::vector<std::size_t>{2, 1});

  std::vector<std::pair<std::string, std::string>> oov = {{"w1", "nope"}, {"nope", "w1"}};
  CHECK_THROWS_AS(eval_bli(m, m, numerics::OrthogonalMap::identity(6), make_lexicon(oov, LexiconSplit::kTest)),
                  Error);
}

TEST_CASE("property: BLI ranks are invariant under a shared rotation") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const Matrix s = random_matrix(rng, 25, 7), g = random_matrix(rng, 40, 7);
    std::vector<BliQuery> q;
    for (std::size_t i = 0; i < 25; ++i) q.push_back({i, {rng() % 40, rng() % 40}});
    const auto base = rank_translations(s, g, q);
    const Matrix rot = random_orthogonal(rng, 7);
    const auto turned = rank_translations(s * rot, g * rot, q, 3);
    CHECK(std::abs(base.mrr - turned.mrr) < 1e-9);
    CHECK(base.mrr >= 0.0);
    CHECK(base.mrr <= 1.0);
  }
}

TEST_CASE("IDF and text embedding") {
  const std::vector<std::vector<std::string>> docs = {{"a", "b", "b"}, {"b", "c"}, {"b"}};
  const auto idf = build_idf(docs);
  CHECK(idf.documents == 3);
  CHECK(*idf.find("b") == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(*idf.find("a") - 1.6931) < 1e-4);
  CHECK(!idf.find("zzz"));
  CHECK(*build_idf(docs, IdfFormula::kPlain).find("b") == 0.0);

  Matrix m(4, 3);
  m << 1, 2, 3, 1, 2, 3, -1, 0, 2, 5, 5, 5;
  const auto matrix = make_matrix({"a", "b", "c", "d"}, m);
  IdfTable table;
  table.weights = {{"a", 1.0}, {"b", 2.0}, {"c", 0.5}};
  const std::vector<std::string> one = {"a"};
  CHECK(embed_text(one, matrix, table).vector == Vector(m.row(0).transpose()));
  const std::vector<std::string> pair = {"a", "b"};
  CHECK(embed_text(pair, matrix, table).vector.isApprox(Vector(3 * m.row(0).transpose())));

  // 4-token toy text against a hand-rolled weighted sum; "d" has no idf and
  // "q" no vector, so both are skipped.
  const std::vector<std::string> toy = {"c", "d", "q", "a"};
  const Vector oracle = 0.5 * m.row(2).transpose() + 1.0 * m.row(0).transpose();
  const auto e = embed_text(toy, matrix, table);
  CHECK((e.vector - oracle).norm() < 1e-12);
  CHECK(e.tokens_used == 2);

  const std::vector<std::string> none = {"d", "q"};
  const auto z = embed_text(none, matrix, table);
  CHECK(z.zero);
  CHECK(z.vector.norm() == 0.0);

  std::mt19937_64 rng(6);
  const Matrix r = random_orthogonal(rng, 3);
  const numerics::OrthogonalMap map{r};
  CHECK((embed_text(toy, matrix, table, &map).vector - r.transpose() * oracle).norm() < 1e-12);
}

TEST_CASE("average precision") {
  const std::vector<std::string> ranking = {"d1", "d2", "d3", "d4"};
  CHECK(std::abs(average_precision(ranking, {"d1", "d3"}) - 0.8333) < 1e-4);
  CHECK(average_precision(ranking, {"d1", "d2"}) == 1.0);
  CHECK(average_precision(ranking, {"d9"}) == 0.0);

  std::mt19937_64 rng(7);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng() % 20;
    std::vector<std::string> docs = numbered_words(n, "d");
    std::set<std::string> rel;
    for (const auto& d : docs) {
      if (rng() % 3 == 0) rel.insert(d);
    }
    if (rel.empty()) rel.insert(docs[rng() % n]);
    std::shuffle(docs.begin(), docs.end(), rng);
    const double ap = average_precision(docs, rel);
    CHECK(std::abs(ap - brute_force_ap(docs, rel)) < 1e-12);
    CHECK(ap >= 0.0);
    CHECK(ap <= 1.0);
  }
}

TEST_CASE("CLIR on a toy collection") {
  TempDir dir;
  // Source words s0..s5 map to target words t0..t5 through a rotation.
  std::mt19937_64 rng(8);
  const Matrix x = random_matrix(rng, 6, 6);
  const Matrix r = random_orthogonal(rng, 6);
  const auto src = make_matrix(numbered_words(6, "s"), x);
  const auto tgt = make_matrix(numbered_words(6, "t"), x * r);
  std::vector<std::pair<std::string, std::string>> pairs;
  for (int i = 0; i < 6; ++i) pairs.emplace_back("s" + std::to_string(i), "t" + std::to_string(i));
  const auto map = align_spaces(src, tgt, make_lexicon(pairs, LexiconSplit::kTrain)).map;

  write_file(dir / "documents.tsv", "doc0\tt0 t0, t1.\ndoc1\tt2 t3\ndoc2\tt4 t5 t4\ndoc3\tunknown words\n");
  write_file(dir / "queries.tsv", "q0\ts0 s1\nq1\ts4 s5\nq2\tnothing here\nq3\ts2\n");
  write_file(dir / "qrels.tsv", "q0\tdoc0\nq1 0 doc2 1\nq1 0 doc1 0\nq2\tdoc1\n");
  const auto c = load_collection(dir.path());
  CHECK(c.documents.at("doc0") == std::vector<std::string>{"t0", "t0", "t1"});
  CHECK(c.relevance.at("q1") == std::set<std::string>{"doc2"});

  const auto res = eval_clir(c, src, tgt, map);
  CHECK(res.average_precision.size() == 3);  // q3 has no relevance judgments
  CHECK(res.average_precision.at("q0") == doctest::Approx(1.0));
  CHECK(res.average_precision.at("q1") == doctest::Approx(1.0));
  CHECK(res.average_precision.at("q2") == 0.0);
  CHECK(res.zero_queries == 1);
  CHECK(res.warnings.size() == 1);
  CHECK(res.map_score == doctest::Approx(2.0 / 3.0));

  write_file(dir / "qrels.tsv", "q0\tdoc99\n");
  CHECK_THROWS_AS(load_collection(dir.path()), Error);
}
