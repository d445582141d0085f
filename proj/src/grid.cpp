#include "lexprobe/grid.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <unordered_map>

#include "lexprobe/config_id.hpp"
#include "lexprobe/error.hpp"
#include "lexprobe/eval_mono.hpp"
#include "lexprobe/hashing.hpp"
#include "lexprobe/parallel.hpp"
#include "lexprobe/text.hpp"

namespace lexprobe {

using nlohmann::json;
namespace fs = std::filesystem;

// --- tasks -------------------------------------------------------------------

const char* to_string(Task task) {
  switch (task) {
    case Task::kLsim: return "LSIM";
    case Task::kWa: return "WA";
    case Task::kBli: return "BLI";
    case Task::kClir: return "CLIR";
    case Task::kRelp: return "RELP";
    case Task::kCka: return "CKA";
  }
  return "?";
}

Task parse_task(std::string_view s) {
  std::string upper(text::trim(s));
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  for (Task t : kAllTasks) {
    if (upper == to_string(t)) return t;
  }
  fail(ErrorKind::kParse, "unknown task \"" + std::string(s) + "\"");
}

std::size_t task_rank(Task task) { return static_cast<std::size_t>(task); }

bool is_bilingual(Task task) { return task == Task::kBli || task == Task::kClir || task == Task::kCka; }

// --- grid spec ---------------------------------------------------------------

namespace {

template <typename T>
T parse_unsigned(std::string_view value, const std::string& where) {
  T out{};
  const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || p != value.data() + value.size()) {
    fail(ErrorKind::kParse, where + ": expected a non-negative integer, got \"" + std::string(value) + "\"");
  }
  return out;
}

std::vector<std::string> split_list(std::string_view value) {
  std::vector<std::string> out;
  std::string current;
  for (char c : value) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current += c;
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

LanguagePair parse_pair(std::string_view s, const std::string& where) {
  const auto dash = s.find('-');
  if (dash == std::string_view::npos || dash == 0 || dash + 1 == s.size()) {
    fail(ErrorKind::kParse, where + ": expected a language pair like en-de, got \"" + std::string(s) + "\"");
  }
  return {std::string(s.substr(0, dash)), std::string(s.substr(dash + 1))};
}

}  // namespace

GridSpec parse_grid_spec(std::string_view content, const fs::path& base_dir) {
  GridSpec spec;
  std::set<Task> tasks;
  bool tasks_given = false;
  std::set<std::string> seen_configs;
  auto resolve = [&](std::string_view v) {
    fs::path p{std::string(v)};
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    const auto nl = content.find('\n', pos);
    std::string_view line = content.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? content.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    const std::string where = "grid line " + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(ErrorKind::kParse, where + ": expected key = value");
    const std::string key(text::trim(line.substr(0, eq)));
    const std::string_view value = text::trim(line.substr(eq + 1));
    if (value.empty()) fail(ErrorKind::kParse, where + ": empty value for \"" + key + "\"");
    const auto parts = text::split(key, '.');

    if (key == "output") {
      spec.output = resolve(value);
    } else if (key == "seed") {
      spec.seed = parse_unsigned<std::uint64_t>(value, where);
    } else if (key == "workers") {
      spec.workers = parse_unsigned<std::size_t>(value, where);
    } else if (key == "relp_runs") {
      spec.relp_runs = parse_unsigned<std::size_t>(value, where);
    } else if (key == "relp_folds") {
      spec.relp_folds = parse_unsigned<std::size_t>(value, where);
    } else if (key == "relp_epochs") {
      spec.relp_epochs = parse_unsigned<std::size_t>(value, where);
    } else if (key == "idf") {
      if (value == "smooth") {
        spec.idf = IdfFormula::kSmooth;
      } else if (value == "plain") {
        spec.idf = IdfFormula::kPlain;
      } else {
        fail(ErrorKind::kParse, where + ": idf must be smooth or plain");
      }
    } else if (key == "tasks") {
      tasks_given = true;
      for (const auto& t : split_list(value)) tasks.insert(parse_task(t));
    } else if (key == "configs" || key == "config") {
      for (const auto& c : split_list(value)) {
        std::string canonical;
        try {
          canonical = to_config_id(parse_config_id(c));
        } catch (const Error& e) {
          fail(ErrorKind::kParse, where + ": " + e.what());
        }
        if (seen_configs.insert(canonical).second) spec.configs.push_back(canonical);
      }
    } else if (parts.size() == 4 && parts[0] == "store") {
      auto& paths = spec.languages[std::string(parts[1])].stores[parse_source_kind(parts[2])];
      if (parts[3] == "iso") {
        paths.iso = resolve(value);
      } else if (parts[3] == "aoc") {
        paths.aoc = resolve(value);
      } else {
        fail(ErrorKind::kParse, where + ": store kind must be iso or aoc");
      }
    } else if (parts.size() == 2 && (parts[0] == "vocab" || parts[0] == "lsim" || parts[0] == "wa" ||
                                     parts[0] == "relp")) {
      auto& lang = spec.languages[std::string(parts[1])];
      auto& slot = parts[0] == "vocab" ? lang.vocab : parts[0] == "lsim" ? lang.lsim : parts[0] == "wa" ? lang.wa : lang.relp;
      slot = resolve(value);
    } else if (parts.size() == 3 && parts[0] == "bli") {
      auto& pair = spec.pairs[parse_pair(parts[1], where)];
      if (parts[2] == "train") {
        pair.bli_train = resolve(value);
      } else if (parts[2] == "test") {
        pair.bli_test = resolve(value);
      } else {
        fail(ErrorKind::kParse, where + ": bli split must be train or test");
      }
    } else if (parts.size() == 2 && (parts[0] == "clir" || parts[0] == "cka")) {
      auto& pair = spec.pairs[parse_pair(parts[1], where)];
      (parts[0] == "clir" ? pair.clir : pair.cka) = resolve(value);
    } else {
      fail(ErrorKind::kParse, where + ": unknown key \"" + key + "\"");
    }
  }
  if (spec.output.empty()) fail(ErrorKind::kParse, "grid spec has no output directory");
  if (spec.configs.empty()) fail(ErrorKind::kParse, "grid spec lists no configs");
  if (!tasks_given) tasks.insert(std::begin(kAllTasks), std::end(kAllTasks));
  spec.tasks.assign(tasks.begin(), tasks.end());
  return spec;
}

GridSpec load_grid_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open grid spec: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_grid_spec(buf.str(), path.parent_path());
}

namespace {

bool wants(const GridSpec& spec, Task task) {
  return std::find(spec.tasks.begin(), spec.tasks.end(), task) != spec.tasks.end();
}

// Languages whose matrices some requested task reads.
std::set<std::string> needed_languages(const GridSpec& spec) {
  std::set<std::string> out;
  for (const auto& [lang, in] : spec.languages) {
    if ((wants(spec, Task::kLsim) && in.lsim) || (wants(spec, Task::kWa) && in.wa) ||
        (wants(spec, Task::kRelp) && in.relp)) {
      out.insert(lang);
    }
  }
  for (const auto& [pair, in] : spec.pairs) {
    const bool bli = wants(spec, Task::kBli) && in.bli_test;
    const bool clir = wants(spec, Task::kClir) && in.clir;
    const bool cka = wants(spec, Task::kCka) && (in.cka || in.bli_test);
    if (bli || clir || cka) {
      out.insert(pair.source);
      out.insert(pair.target);
    }
  }
  return out;
}

void require_path(const std::optional<fs::path>& p, const std::string& what) {
  if (!p) fail(ErrorKind::kNotFound, "grid spec: " + what + " is not set");
  if (!fs::exists(*p)) fail(ErrorKind::kNotFound, "grid spec: " + what + " does not exist: " + p->string());
}

}  // namespace

void validate_grid_spec(const GridSpec& spec) {
  for (const auto& [lang, in] : spec.languages) {
    for (const auto& [kind, paths] : in.stores) {
      const std::string name = std::string("store.") + lang + "." + to_string(kind);
      if (paths.iso) require_path(paths.iso, name + ".iso");
      if (paths.aoc) require_path(paths.aoc, name + ".aoc");
    }
    if (in.vocab) require_path(in.vocab, "vocab." + lang);
    if (in.lsim) require_path(in.lsim, "lsim." + lang);
    if (in.wa) require_path(in.wa, "wa." + lang);
    if (in.relp) require_path(in.relp, "relp." + lang);
  }
  for (const auto& [pair, in] : spec.pairs) {
    const std::string id = pair.id();
    if (in.bli_train) require_path(in.bli_train, "bli." + id + ".train");
    if (in.bli_test) require_path(in.bli_test, "bli." + id + ".test");
    if (in.clir) require_path(in.clir, "clir." + id);
    if (in.cka) require_path(in.cka, "cka." + id);
    if (wants(spec, Task::kBli) && in.bli_test) require_path(in.bli_train, "bli." + id + ".train");
    if (wants(spec, Task::kClir) && in.clir) require_path(in.bli_train, "bli." + id + ".train (needed by CLIR)");
  }

  for (const auto& lang : needed_languages(spec)) {
    const auto it = spec.languages.find(lang);
    if (it == spec.languages.end()) fail(ErrorKind::kNotFound, "grid spec: no inputs for language " + lang);
    require_path(it->second.vocab, "vocab." + lang);
    for (const auto& id : spec.configs) {
      const auto config = parse_config_id(id);
      const std::string name = std::string("store.") + lang + "." + to_string(config.source);
      const auto s = it->second.stores.find(config.source);
      const StorePaths paths = s == it->second.stores.end() ? StorePaths{} : s->second;
      require_path(paths.iso, name + ".iso");
      const auto iso = open_store(*paths.iso);
      if (config.context.is_aoc()) {
        require_path(paths.aoc, name + ".aoc");
        const auto aoc = open_store(*paths.aoc);
        if (aoc->num_layers() != iso->num_layers() || aoc->dim() != iso->dim()) {
          fail(ErrorKind::kDimensionMismatch, "grid spec: " + name + " iso and aoc stores disagree on shape");
        }
      }
      try {
        parse_config_id(id, iso->num_layers());
      } catch (const Error& e) {
        fail(ErrorKind::kParse, "grid spec: config " + id + " does not fit " + name + ": " + e.what());
      }
    }
  }
}

// --- running -----------------------------------------------------------------

namespace {

constexpr std::string_view kResultsFormat = "lexprobe-results-1";

// Inputs shared read-only by every config.
struct SharedInputs {
  std::map<fs::path, std::string> hashes;  // path -> content hash
  std::map<fs::path, StoreHandle> stores;
  std::map<std::string, Vocabulary> vocabularies;

  const std::string& hash(const fs::path& p) const { return hashes.at(p); }
};

// Lazily parsed datasets; a parse failure is remembered and reported on
// every row that needs the file.
template <typename T>
class LazyDataset {
 public:
  using Loader = std::function<T(const fs::path&)>;

  LazyDataset(Loader loader) : loader_(std::move(loader)) {}

  const T& get(const fs::path& path) {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(path);
    if (it == cache_.end()) {
      Entry e;
      try {
        e.value = std::make_shared<T>(loader_(path));
      } catch (const std::exception& ex) {
        e.error = ex.what();
      }
      it = cache_.emplace(path, std::move(e)).first;
    }
    if (!it->second.value) throw Error(ErrorKind::kFormat, it->second.error);
    return *it->second.value;
  }

 private:
  struct Entry {
    std::shared_ptr<T> value;
    std::string error;
  };
  Loader loader_;
  std::mutex mutex_;
  std::map<fs::path, Entry> cache_;
};

struct Datasets {
  LazyDataset<std::vector<SimilarityPair>> lsim{load_similarity_pairs};
  LazyDataset<std::vector<AnalogyQuestion>> wa{load_analogy_questions};
  LazyDataset<std::vector<RelationPair>> relp{load_relation_pairs};
  LazyDataset<BilingualLexicon> train{[](const fs::path& p) { return load_lexicon(p, LexiconSplit::kTrain); }};
  LazyDataset<BilingualLexicon> test{[](const fs::path& p) { return load_lexicon(p, LexiconSplit::kTest); }};
  LazyDataset<RetrievalCollection> clir{load_collection};
};

struct CacheStats {
  std::size_t built = 0;
  std::size_t cached = 0;
};

class ConfigRun {
 public:
  ConfigRun(const GridSpec& spec, const SharedInputs& shared, Datasets& data, std::string config_id,
            std::size_t workers)
      : spec_(spec), shared_(shared), data_(data), id_(std::move(config_id)),
        config_(parse_config_id(id_)), workers_(workers) {}

  std::vector<ResultRow> run();
  CacheStats stats() const { return stats_; }

 private:
  struct MatrixSlot {
    std::shared_ptr<TypeEmbeddingMatrix> matrix;
    std::string error;
  };
  struct AlignedPair {
    NormalizedSpace src, tgt;
    Alignment alignment;
  };

  std::pair<fs::path, std::optional<fs::path>> store_paths(const std::string& lang) const;
  std::string matrix_key(const std::string& lang) const;
  const TypeEmbeddingMatrix& matrix(const std::string& lang);
  const AlignedPair& aligned(const LanguagePair& pair);

  ResultRow row(Task task, const std::string& language, const std::string& metric,
                std::vector<std::string> inputs, const std::function<void(ResultRow&)>& body);

  const GridSpec& spec_;
  const SharedInputs& shared_;
  Datasets& data_;
  std::string id_;
  ExtractionConfig config_;
  std::size_t workers_;
  CacheStats stats_;
  std::map<std::string, MatrixSlot> matrices_;
  std::map<LanguagePair, std::shared_ptr<AlignedPair>> aligned_;
};

std::pair<fs::path, std::optional<fs::path>> ConfigRun::store_paths(const std::string& lang) const {
  const auto& paths = spec_.languages.at(lang).stores.at(config_.source);
  if (config_.context.is_aoc()) return {*paths.aoc, *paths.iso};
  return {*paths.iso, std::nullopt};
}

std::string ConfigRun::matrix_key(const std::string& lang) const {
  const auto [primary, backoff] = store_paths(lang);
  Sha256 h;
  h.field("lexprobe-matrix-1");
  h.field(shared_.hash(primary));
  h.field(backoff ? shared_.hash(*backoff) : "");
  h.field(shared_.hash(*spec_.languages.at(lang).vocab));
  h.field(id_);
  return h.hex_digest();
}

const TypeEmbeddingMatrix& ConfigRun::matrix(const std::string& lang) {
  auto it = matrices_.find(lang);
  if (it == matrices_.end()) {
    MatrixSlot slot;
    try {
      const std::string key = matrix_key(lang);
      const fs::path cached = spec_.output / "cache" / (key + ".lxtm");
      if (fs::exists(cached)) {
        try {
          auto m = std::make_shared<TypeEmbeddingMatrix>(load_binary(cached));
          if (m->provenance().config_id == id_ && m->vocabulary() == shared_.vocabularies.at(lang)) {
            slot.matrix = std::move(m);
            ++stats_.cached;
          }
        } catch (const Error&) {
          // unreadable cache entries are rebuilt below
        }
      }
      if (!slot.matrix) {
        const auto [primary, backoff] = store_paths(lang);
        const StoreSet stores{shared_.stores.at(primary), backoff ? shared_.stores.at(*backoff) : nullptr};
        auto m = std::make_shared<TypeEmbeddingMatrix>(
            build_matrix(shared_.vocabularies.at(lang), stores, config_, BuildOptions{workers_}));
        const fs::path tmp = cached.string() + ".tmp";
        save_binary(*m, tmp);
        fs::rename(tmp, cached);
        slot.matrix = std::move(m);
        ++stats_.built;
      }
    } catch (const std::exception& e) {
      slot.error = "matrix for " + lang + ": " + e.what();
    }
    it = matrices_.emplace(lang, std::move(slot)).first;
  }
  if (!it->second.matrix) throw Error(ErrorKind::kNotFound, it->second.error);
  return *it->second.matrix;
}

const ConfigRun::AlignedPair& ConfigRun::aligned(const LanguagePair& pair) {
  auto& slot = aligned_[pair];
  if (!slot) {
    auto a = std::make_shared<AlignedPair>();
    a->src = NormalizedSpace::from(matrix(pair.source));
    a->tgt = NormalizedSpace::from(matrix(pair.target));
    a->alignment = align_spaces(a->src, a->tgt, data_.train.get(*spec_.pairs.at(pair).bli_train));
    slot = std::move(a);
  }
  return *slot;
}

ResultRow ConfigRun::row(Task task, const std::string& language, const std::string& metric,
                         std::vector<std::string> inputs, const std::function<void(ResultRow&)>& body) {
  ResultRow r;
  r.config = id_;
  r.task = task;
  r.language = language;
  r.metric = metric;
  Sha256 h;
  h.field(kResultsFormat);
  h.field(to_string(task));
  h.field(metric);
  for (const auto& in : inputs) h.field(in);
  r.provenance = h.hex_digest();
  const auto start = std::chrono::steady_clock::now();
  try {
    body(r);
    if (r.value && !std::isfinite(*r.value)) fail(ErrorKind::kNumeric, "non-finite metric value");
    const double lo = task == Task::kLsim ? -1.0 : 0.0;
    if (r.value && (*r.value < lo || *r.value > 1.0))
      fail(ErrorKind::kNumeric, metric + " outside [" + text::format_double(lo) + ", 1]: " + text::format_double(*r.value));
  } catch (const std::exception& e) {
    r.value.reset();
    r.coverage.reset();
    r.error = e.what();
    if (r.error.empty()) r.error = "unknown error";
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::vector<ResultRow> ConfigRun::run() {
  std::vector<ResultRow> rows;
  auto key = [&](const std::string& lang) {
    try {
      return matrix_key(lang);
    } catch (const std::exception&) {
      return std::string("unavailable");
    }
  };
  for (Task task : spec_.tasks) {
    if (!is_bilingual(task)) {
      for (const auto& [lang, in] : spec_.languages) {
        if (task == Task::kLsim && in.lsim) {
          rows.push_back(row(task, lang, "spearman_rho", {key(lang), shared_.hash(*in.lsim)}, [&](ResultRow& r) {
            const auto res = eval_lsim(matrix(lang), data_.lsim.get(*in.lsim));
            r.value = res.rho;
            r.coverage = res.coverage();
          }));
        } else if (task == Task::kWa && in.wa) {
          rows.push_back(row(task, lang, "p_at_1", {key(lang), shared_.hash(*in.wa)}, [&](ResultRow& r) {
            const auto res = eval_analogy(matrix(lang), data_.wa.get(*in.wa), workers_);
            r.value = res.p_at_1;
            r.coverage = res.coverage();
          }));
        } else if (task == Task::kRelp && in.relp) {
          const std::string opts = std::to_string(spec_.seed) + "/" + std::to_string(spec_.relp_runs) + "/" +
                                   std::to_string(spec_.relp_folds) + "/" + std::to_string(spec_.relp_epochs);
          rows.push_back(row(task, lang, "micro_f1", {key(lang), shared_.hash(*in.relp), opts}, [&](ResultRow& r) {
            const fs::path dir = spec_.output / "features";
            fs::create_directories(dir);
            const fs::path file = dir / (id_ + "." + lang + ".lxrf");
            const auto summary = export_relp_features(matrix(lang), data_.relp.get(*in.relp), file);
            BaselineOptions opt;
            opt.seed = spec_.seed;
            opt.runs = spec_.relp_runs;
            opt.folds = spec_.relp_folds;
            opt.epochs = spec_.relp_epochs;
            opt.workers = workers_;
            const auto res = train_relation_baseline(load_relp_features(file), opt);
            r.value = res.mean_micro_f1;
            r.coverage = summary.total == 0 ? 0.0 : double(summary.written) / double(summary.total);
          }));
        }
      }
      continue;
    }
    for (const auto& [pair, in] : spec_.pairs) {
      const std::string id = pair.id();
      const std::vector<std::string> both = {key(pair.source), key(pair.target)};
      auto with = [&](std::vector<std::string> extra) {
        auto v = both;
        v.insert(v.end(), extra.begin(), extra.end());
        return v;
      };
      if (task == Task::kBli && in.bli_test) {
        rows.push_back(row(task, id, "mrr", with({shared_.hash(*in.bli_train), shared_.hash(*in.bli_test)}),
                           [&](ResultRow& r) {
                             const auto& a = aligned(pair);
                             const auto res = eval_bli(a.src, a.tgt, a.alignment.map,
                                                       data_.test.get(*in.bli_test), workers_);
                             r.value = res.mrr;
                             r.coverage = res.coverage();
                           }));
      } else if (task == Task::kClir && in.clir) {
        const std::string idf = spec_.idf == IdfFormula::kSmooth ? "smooth" : "plain";
        rows.push_back(row(task, id, "map", with({shared_.hash(*in.bli_train), shared_.hash(*in.clir), idf}),
                           [&](ResultRow& r) {
                             const auto& a = aligned(pair);
                             ClirOptions opt;
                             opt.formula = spec_.idf;
                             opt.workers = workers_;
                             const auto res = eval_clir(data_.clir.get(*in.clir), a.src, a.tgt, a.alignment.map, opt);
                             r.value = res.map_score;
                             const double evaluated = double(res.average_precision.size());
                             r.coverage = (evaluated - double(res.zero_queries)) / evaluated;
                           }));
      } else if (task == Task::kCka && (in.cka || in.bli_test)) {
        const fs::path lexicon = in.cka ? *in.cka : *in.bli_test;
        rows.push_back(row(task, id, "cka", with({shared_.hash(lexicon)}), [&](ResultRow& r) {
          const auto& lex = data_.test.get(lexicon);
          std::vector<std::pair<std::string, std::string>> pairs;
          for (const auto& e : lex.entries) pairs.emplace_back(e.source, e.targets.front());
          const auto res = matrix_correspondence(matrix(pair.source), matrix(pair.target), pairs);
          r.value = res.cka;
          r.coverage = double(res.pairs_used) / double(pairs.size());
        }));
      }
    }
  }
  return rows;
}

// Spearman of CKA against BLI over the AVG_LE(n) depths of each family.
json cka_bli_correlations(const std::vector<ResultRow>& rows) {
  struct Series {
    std::map<std::size_t, double> cka, bli;
  };
  std::map<std::pair<std::string, std::string>, Series> series;
  for (const auto& r : rows) {
    if (!r.ok() || (r.task != Task::kCka && r.task != Task::kBli)) continue;
    const auto c = parse_config_id(r.config);
    if (c.layers.kind != LayerScheme::Kind::kAvgLe) continue;
    auto& s = series[{to_family_id(c), r.language}];
    (r.task == Task::kCka ? s.cka : s.bli)[c.layers.layer] = *r.value;
  }
  json out = json::array();
  for (const auto& [k, s] : series) {
    std::vector<double> cka, bli;
    std::vector<std::size_t> depths;
    for (const auto& [n, v] : s.cka) {
      const auto b = s.bli.find(n);
      if (b == s.bli.end()) continue;
      depths.push_back(n);
      cka.push_back(v);
      bli.push_back(b->second);
    }
    if (depths.size() < 2) continue;
    json j{{"family", k.first}, {"pair", k.second}, {"depths", depths}, {"cka", cka}, {"bli", bli}};
    try {
      j["spearman_rho"] = correlate_cka_with_bli(cka, bli);
    } catch (const Error& e) {
      j["spearman_rho"] = nullptr;
      j["error"] = e.what();
    }
    out.push_back(std::move(j));
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string optional_number(const std::optional<double>& v) { return v ? text::format_double(*v) : ""; }

void write_text(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
    out << content;
    if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

std::string results_csv(const std::vector<ResultRow>& rows) {
  std::string out = "config,task,language,metric,value,coverage,status,provenance,error\n";
  for (const auto& r : rows) {
    out += csv_field(r.config) + ',' + to_string(r.task) + ',' + csv_field(r.language) + ',' + csv_field(r.metric) +
           ',' + optional_number(r.value) + ',' + optional_number(r.coverage) + ',' + (r.ok() ? "ok" : "error") +
           ',' + r.provenance + ',' + csv_field(r.error) + '\n';
  }
  return out;
}

namespace {

// RFC 4180 records: quoted fields may hold commas, quotes and newlines.
std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    any = true;
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      record.push_back(std::move(field));
      field.clear();
      records.push_back(std::move(record));
      record.clear();
      any = false;
    } else {
      field += c;
    }
  }
  if (quoted) fail(ErrorKind::kParse, "results CSV: unterminated quoted field");
  if (any) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  return records;
}

std::optional<double> parse_optional_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) fail(ErrorKind::kParse, "results CSV: bad number \"" + s + "\"");
  return v;
}

}  // namespace

std::vector<ResultRow> parse_results_csv(std::string_view text) {
  const auto records = parse_csv(text);
  if (records.empty() || records[0].size() != 9 || records[0][0] != "config") {
    fail(ErrorKind::kParse, "results CSV: missing or unexpected header");
  }
  std::vector<ResultRow> rows;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& f = records[i];
    if (f.size() == 1 && f[0].empty()) continue;
    if (f.size() != 9) fail(ErrorKind::kParse, "results CSV: record " + std::to_string(i) + " has wrong field count");
    ResultRow r;
    r.config = f[0];
    r.task = parse_task(f[1]);
    r.language = f[2];
    r.metric = f[3];
    r.value = parse_optional_number(f[4]);
    r.coverage = parse_optional_number(f[5]);
    r.provenance = f[7];
    r.error = f[8];
    if (f[6] == "error" && r.error.empty()) r.error = "error";
    rows.push_back(std::move(r));
  }
  return rows;
}

json results_json(const GridSummary& summary) {
  json tasks = json::object();
  for (Task t : kAllTasks) {
    json list = json::array();
    for (const auto& r : summary.rows) {
      if (r.task != t) continue;
      json j{{"config", r.config}, {"language", r.language}, {"metric", r.metric},
             {"status", r.ok() ? "ok" : "error"}, {"provenance", r.provenance}};
      j["value"] = r.value ? json(*r.value) : json(nullptr);
      j["coverage"] = r.coverage ? json(*r.coverage) : json(nullptr);
      if (!r.ok()) j["error"] = r.error;
      list.push_back(std::move(j));
    }
    if (!list.empty()) tasks[to_string(t)] = std::move(list);
  }
  return json{{"format", kResultsFormat},
              {"tasks", tasks},
              {"failed_rows", summary.failed_rows},
              {"cka_bli_correlations", summary.correlations},
              {"mapping_pipeline", kMappingPipeline}};
}

GridSummary run_grid(const GridSpec& spec) {
  validate_grid_spec(spec);
  fs::create_directories(spec.output / "cache");

  SharedInputs shared;
  const auto langs = needed_languages(spec);
  std::set<fs::path> to_hash;
  for (const auto& [lang, in] : spec.languages) {
    for (const auto& [kind, paths] : in.stores) {
      if (!langs.contains(lang)) continue;
      if (paths.iso) to_hash.insert(*paths.iso);
      if (paths.aoc) to_hash.insert(*paths.aoc);
    }
    for (const auto* p : {&in.vocab, &in.lsim, &in.wa, &in.relp}) {
      if (*p) to_hash.insert(**p);
    }
  }
  for (const auto& [pair, in] : spec.pairs) {
    for (const auto* p : {&in.bli_train, &in.bli_test, &in.clir, &in.cka}) {
      if (*p) to_hash.insert(**p);
    }
  }
  const std::vector<fs::path> hash_list(to_hash.begin(), to_hash.end());
  std::vector<std::string> digests(hash_list.size());
  parallel_for(hash_list.size(), spec.workers, [&](std::size_t i) { digests[i] = hash_path(hash_list[i]); });
  for (std::size_t i = 0; i < hash_list.size(); ++i) shared.hashes[hash_list[i]] = digests[i];

  for (const auto& lang : langs) {
    const auto& in = spec.languages.at(lang);
    shared.vocabularies.emplace(lang, Vocabulary::load(*in.vocab));
    for (const auto& [kind, paths] : in.stores) {
      if (paths.iso) shared.stores.emplace(*paths.iso, open_store(*paths.iso));
      if (paths.aoc) shared.stores.emplace(*paths.aoc, open_store(*paths.aoc));
    }
  }

  Datasets data;
  const std::size_t workers = resolve_workers(spec.workers);
  const std::size_t outer = std::min(workers, spec.configs.size());
  const std::size_t inner = outer > 1 ? 1 : workers;
  std::vector<std::vector<ResultRow>> per_config(spec.configs.size());
  std::vector<CacheStats> stats(spec.configs.size());
  parallel_for(spec.configs.size(), outer, [&](std::size_t i) {
    ConfigRun run(spec, shared, data, spec.configs[i], inner);
    per_config[i] = run.run();
    stats[i] = run.stats();
  });

  GridSummary summary;
  for (std::size_t i = 0; i < per_config.size(); ++i) {
    for (auto& r : per_config[i]) summary.rows.push_back(std::move(r));
    summary.matrices_built += stats[i].built;
    summary.matrices_cached += stats[i].cached;
  }
  std::stable_sort(summary.rows.begin(), summary.rows.end(),
                   [](const ResultRow& a, const ResultRow& b) { return task_rank(a.task) < task_rank(b.task); });
  summary.failed_rows = static_cast<std::size_t>(
      std::count_if(summary.rows.begin(), summary.rows.end(), [](const ResultRow& r) { return !r.ok(); }));
  summary.correlations = cka_bli_correlations(summary.rows);

  write_text(spec.output / "results.csv", results_csv(summary.rows));
  write_text(spec.output / "results.json", results_json(summary).dump(2) + "\n");
  std::string timings = "config,task,language,seconds\n";
  for (const auto& r : summary.rows) {
    timings += csv_field(r.config) + ',' + to_string(r.task) + ',' + csv_field(r.language) + ',' +
               text::format_double(r.wall_seconds) + '\n';
  }
  write_text(spec.output / "timings.csv", timings);
  return summary;
}

// --- plot data ---------------------------------------------------------------

std::string emit_plot_data(const std::vector<ResultRow>& rows, const PlotSelector& selector) {
  std::vector<const ResultRow*> picked;
  for (const auto& r : rows) {
    if (!r.ok() || !r.value) continue;
    if (!selector.tasks.empty() && !selector.tasks.contains(r.task)) continue;
    if (!r.config.starts_with(selector.config_prefix)) continue;
    if (!selector.languages.empty() && !selector.languages.contains(r.language)) continue;
    if (!selector.metric.empty() && r.metric != selector.metric) continue;
    picked.push_back(&r);
  }
  if (picked.empty()) fail(ErrorKind::kEmptySelection, "plot selector matches no successful result row");
  std::stable_sort(picked.begin(), picked.end(),
                   [](const ResultRow* a, const ResultRow* b) { return task_rank(a->task) < task_rank(b->task); });
  std::string out = "config,x,series,value\n";
  for (const auto* r : picked) {
    const auto c = parse_config_id(r->config);
    out += to_family_id(c) + ',' + to_layer_id(c.layers) + ',' +
           csv_field(std::string(to_string(r->task)) + ":" + r->language + ":" + r->metric) + ',' +
           text::format_double(*r->value) + '\n';
  }
  return out;
}

std::string emit_plot_data(const CkaResult& result) {
  if (result.scores.size() == 0) fail(ErrorKind::kEmptySelection, "CKA result has no scores");
  std::string out = "config,x,series,value\n";
  const std::string config = csv_field(result.config.empty() ? to_string(result.pairing) : result.config);
  for (Eigen::Index r = 0; r < result.scores.rows(); ++r) {
    for (Eigen::Index c = 0; c < result.scores.cols(); ++c) {
      out += config + ',' + csv_field(result.axis_a[static_cast<std::size_t>(r)]) + ',' +
             csv_field(result.axis_b[static_cast<std::size_t>(c)]) + ',' + text::format_double(result.scores(r, c)) +
             '\n';
    }
  }
  return out;
}

}  // namespace lexprobe
