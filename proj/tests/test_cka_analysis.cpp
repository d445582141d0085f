#include <doctest.h>

#include "lexprobe/cka_analysis.hpp"
#include "lexprobe/error.hpp"
#include "test_support.hpp"

using namespace lexprobe;
using namespace lexprobe::testing;

namespace {

// Layers sharing a base signal Z; layer l adds noise of scale sigma[l].
std::vector<Matrix> noisy_layers(std::mt19937_64& rng, const Matrix& base, const std::vector<double>& sigma) {
  std::vector<Matrix> layers;
  for (double s : sigma) layers.push_back(base + s * random_matrix(rng, base.rows(), base.cols()));
  return layers;
}

StoreSet iso_store(const std::filesystem::path& path, const std::vector<std::string>& words,
                   const std::vector<Matrix>& layers) {
  std::vector<OccurrenceRecord> recs;
  for (std::size_t i = 0; i < words.size(); ++i) recs.push_back(single_token_record(words[i], layers, i));
  return {write_and_open(path, make_header(layers.size(), static_cast<std::size_t>(layers[0].cols())), recs),
          nullptr};
}

}  // namespace

TEST_CASE("self-similarity on layer matrices") {
  std::mt19937_64 rng(1);
  const Matrix z = random_matrix(rng, 80, 12);
  // Layers 0-2 are correlated through z; layer 3 is independent.
  auto layers = noisy_layers(rng, z, {0.2, 0.3, 0.4});
  layers.push_back(random_matrix(rng, 80, 12));
  const auto r = self_similarity(layers, {{}, 2});
  REQUIRE(r.scores.rows() == 4);
  for (Eigen::Index i = 0; i < 4; ++i) {
    CHECK(std::abs(r.scores(i, i) - 1.0) < 1e-6);
    for (Eigen::Index j = 0; j < 4; ++j) {
      CHECK(std::abs(r.scores(i, j) - r.scores(j, i)) < 1e-9);
      CHECK(r.scores(i, j) >= 0.0);
      CHECK(r.scores(i, j) <= 1.0);
    }
  }
  CHECK(r.scores(0, 3) < r.scores(0, 1));
  CHECK(r.scores(0, 1) == doctest::Approx(numerics::linear_cka(layers[0], layers[1])).epsilon(1e-12));
  CHECK(r.word_count == 80);
  CHECK(r.preprocessing == "l2-normalize rows, then mean-center columns");

  const std::vector<Matrix> one_word = {Matrix::Ones(1, 3)};
  CHECK_THROWS_AS(self_similarity(one_word), Error);
}

TEST_CASE("self-similarity from a store with identical layers is all ones") {
  TempDir dir;
  std::mt19937_64 rng(2);
  const auto words = numbered_words(20);
  const Matrix z = random_matrix(rng, 20, 6);
  const auto stores = iso_store(dir / "iso.lxts", words, {z, z, z});
  std::vector<std::string> query = words;
  query.push_back("missing");
  const auto r = self_similarity(query, stores, ContextMode::iso(), SpecialPolicy::kNoSpec);
  CHECK((r.scores - Matrix::Ones(3, 3)).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(r.dropped == 1);
  CHECK(r.word_count == 20);
  CHECK(r.config == "iso.nospec");

  const std::vector<std::string> lonely = {"w0", "nope"};
  CHECK_THROWS_AS(self_similarity(lonely, stores, ContextMode::iso(), SpecialPolicy::kNoSpec), Error);
}

TEST_CASE("bilingual correspondence examples") {
  TempDir dir;
  std::mt19937_64 rng(3);
  const std::size_t s = 100, d = 16;
  const auto src_words = numbered_words(s, "s"), tgt_words = numbered_words(s, "t");
  const auto src_layers = noisy_layers(rng, random_matrix(rng, s, d), {0.5, 0.5, 0.5});
  const Matrix rot = random_orthogonal(rng, d);
  std::vector<Matrix> rotated;
  for (const auto& l : src_layers) rotated.push_back(l * rot);

  const auto src = iso_store(dir / "src.lxts", src_words, src_layers);
  const auto tgt_rot = iso_store(dir / "tgt.lxts", tgt_words, rotated);
  std::vector<std::pair<std::string, std::string>> pairs, identity;
  for (std::size_t i = 0; i < s; ++i) {
    pairs.emplace_back(src_words[i], tgt_words[i]);
    identity.emplace_back(src_words[i], src_words[i]);
  }

  const auto self = bilingual_correspondence(src, src, identity, ContextMode::iso(), SpecialPolicy::kNoSpec);
  CHECK((self.scores.array() - 1.0).abs().maxCoeff() < 1e-6);
  const auto turned = bilingual_correspondence(src, tgt_rot, pairs, ContextMode::iso(), SpecialPolicy::kNoSpec);
  CHECK((turned.scores.array() - 1.0).abs().maxCoeff() < 1e-6);
  CHECK(turned.pairing == Pairing::kTranslation);
  CHECK(turned.scores.cols() == 1);

  std::vector<Matrix> independent;
  for (std::size_t l = 0; l < 3; ++l) independent.push_back(random_matrix(rng, s, d));
  const auto noise = bilingual_correspondence(src_layers, independent);
  const auto signal = bilingual_correspondence(src_layers, noisy_layers(rng, src_layers[0], {0.3, 0.3, 0.3}));
  for (Eigen::Index l = 0; l < 3; ++l) {
    CHECK(noise.scores(l, 0) < 0.3);
    CHECK(noise.scores(l, 0) < signal.scores(l, 0));
  }

  const auto grid = bilingual_correspondence(src_layers, rotated, CorrespondenceShape::kAllLayers);
  CHECK(grid.scores.rows() == 3);
  CHECK(grid.scores.cols() == 3);
  CHECK(std::abs(grid.scores(1, 1) - 1.0) < 1e-6);
  CHECK(std::abs(grid.scores(0, 2) - numerics::linear_cka(src_layers[0], rotated[2])) < 1e-9);

  const std::vector<std::pair<std::string, std::string>> one = {{"s0", "t0"}, {"s1", "zz"}};
  CHECK_THROWS_AS(bilingual_correspondence(src, tgt_rot, one, ContextMode::iso(), SpecialPolicy::kNoSpec), Error);
}

TEST_CASE("property: correspondence is invariant to independent rotations") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const auto a = noisy_layers(rng, random_matrix(rng, 30, 5), {0.1, 1.0});
    const auto b = noisy_layers(rng, a[0], {0.5, 0.5});
    const Matrix ra = random_orthogonal(rng, 5), rb = random_orthogonal(rng, 5);
    std::vector<Matrix> a2 = {a[0] * ra, a[1] * ra}, b2 = {b[0] * rb, b[1] * rb};
    const auto base = bilingual_correspondence(a, b);
    const auto turned = bilingual_correspondence(a2, b2);
    CHECK((base.scores - turned.scores).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("random pairing") {
  TempDir dir;
  std::mt19937_64 rng(5);
  const std::size_t s = 120, d = 16;
  const auto src_words = numbered_words(s, "s"), tgt_words = numbered_words(s, "t");
  const auto src_layers = noisy_layers(rng, random_matrix(rng, s, d), {0.5, 0.5, 0.5, 0.5});
  const Matrix rot = random_orthogonal(rng, d);
  std::vector<Matrix> tgt_layers;
  for (const auto& l : src_layers) tgt_layers.push_back(l * rot + 0.3 * random_matrix(rng, s, d));
  const auto src = iso_store(dir / "src.lxts", src_words, src_layers);
  const auto tgt = iso_store(dir / "tgt.lxts", tgt_words, tgt_layers);

  const auto p1 = sample_random_pairs(src_words, tgt_words, 100, 42);
  const auto p2 = sample_random_pairs(src_words, tgt_words, 100, 42);
  CHECK(p1 == p2);
  CHECK(p1 != sample_random_pairs(src_words, tgt_words, 100, 43));
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i].first == src_words[i]);
  CHECK_THROWS_AS(sample_random_pairs(src_words, tgt_words, 121, 1), Error);

  std::vector<std::pair<std::string, std::string>> translation;
  for (std::size_t i = 0; i < 100; ++i) translation.emplace_back(src_words[i], tgt_words[i]);
  const auto real = bilingual_correspondence(src, tgt, translation, ContextMode::iso(), SpecialPolicy::kNoSpec);
  const auto rnd = random_pair_baseline(src, tgt, src_words, tgt_words, 100, 42, ContextMode::iso(),
                                        SpecialPolicy::kNoSpec);
  CHECK(rnd.pairing == Pairing::kRandom);
  CHECK(rnd.seed == 42);
  CHECK(rnd.pairs == p1);
  for (Eigen::Index l = 0; l < 4; ++l) CHECK(rnd.scores(l, 0) < real.scores(l, 0));
}

TEST_CASE("result serialization round-trips") {
  std::mt19937_64 rng(6);
  auto layers = noisy_layers(rng, random_matrix(rng, 10, 4), {0.1, 0.7});
  auto r = self_similarity(layers);
  r.config = "mono.iso.nospec";
  r.seed = 9;
  r.pairs = {{"a", "b"}};
  const auto back = CkaResult::from_json(nlohmann::json::parse(r.to_json().dump()));
  CHECK(back.scores == r.scores);
  CHECK(back.axis_a == r.axis_a);
  CHECK(back.seed == r.seed);
  CHECK(back.pairs == r.pairs);
  CHECK(back.preprocessing == r.preprocessing);
  const auto csv = r.to_csv();
  CHECK(csv.starts_with("layer,L0,L1\nL0,1,"));
}

TEST_CASE("matrix correspondence and correlation with BLI") {
  std::mt19937_64 rng(7);
  const Matrix x = random_matrix(rng, 30, 6);
  const auto a = make_matrix(numbered_words(30, "s"), x);
  const auto b = make_matrix(numbered_words(30, "t"), x * random_orthogonal(rng, 6));
  std::vector<std::pair<std::string, std::string>> pairs;
  for (int i = 0; i < 30; ++i) pairs.emplace_back("s" + std::to_string(i), "t" + std::to_string(i));
  pairs.emplace_back("s1", "oov");
  const auto mc = matrix_correspondence(a, b, pairs);
  CHECK(mc.pairs_used == 30);
  CHECK(std::abs(mc.cka - 1.0) < 1e-6);

  const std::vector<double> cka = {0.1, 0.2, 0.3, 0.5}, bli = {0.01, 0.05, 0.2, 0.21};
  CHECK(correlate_cka_with_bli(cka, bli) == doctest::Approx(1.0));
  const std::vector<double> rev = {0.21, 0.2, 0.05, 0.01};
  CHECK(correlate_cka_with_bli(cka, rev) == doctest::Approx(-1.0));
  const std::vector<double> short_list = {0.1};
  CHECK_THROWS_AS(correlate_cka_with_bli(cka, short_list), Error);
}
