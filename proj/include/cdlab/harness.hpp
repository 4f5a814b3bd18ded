// Experiment presets for the synthetic either/or study and the treebank
// analysis: training with an on-disk checkpoint cache, per-epoch metrics, and
// CSV/JSON output.
#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdlab/cd.hpp"
#include "cdlab/checkpoint.hpp"
#include "cdlab/conllu.hpp"
#include "cdlab/interdep.hpp"
#include "cdlab/stats.hpp"
#include "cdlab/synth.hpp"
#include "cdlab/train.hpp"
#include "cdlab/ud.hpp"

namespace cdlab {

struct ExperimentPlan {
  std::string preset = "desk";
  std::vector<std::uint64_t> seeds{1, 2, 3};
  SynthSpec synth;  // conduit_len here is the k used by fig3/4/6/appB
  TrainConfig train;
  std::vector<std::size_t> schedule;  // epochs to evaluate; empty = every epoch
  std::size_t fig5_conduit_len = 8;
  SynthSpec grid_base;
  std::vector<std::size_t> grid_n{10, 100, 1000};
  std::vector<std::size_t> grid_k{2, 4, 8};
  std::size_t grid_epochs = 40;
  std::size_t cd_context = 10;  // background tokens kept before the open symbol
  std::filesystem::path out_dir = "results";
  // treebank analysis
  std::filesystem::path conllu;
  std::filesystem::path lm_checkpoint;
  std::size_t max_seq_dist = 5;
  std::size_t min_cases = 100;
  PairTimestep pair_timestep = PairTimestep::Right;

  std::vector<std::size_t> eval_epochs() const {
    if (!schedule.empty()) return schedule;
    std::vector<std::size_t> all;
    for (std::size_t e = 1; e <= train.epochs; ++e) all.push_back(e);
    return all;
  }

  void validate() const {
    if (seeds.empty()) throw std::invalid_argument("plan: no seeds");
    if (train.epochs == 0) throw std::invalid_argument("plan: train.epochs must be >= 1");
    for (std::size_t e : eval_epochs())
      if (e == 0 || e > train.epochs) throw std::invalid_argument("plan: schedule epoch outside 1..train.epochs");
    for (std::size_t k : {synth.conduit_len, fig5_conduit_len})
      if (train.bptt_len < k + 2) throw std::invalid_argument("plan: bptt_len must be >= k + 2");
  }
};

/// Reduced plan sized for a single CPU core.
inline ExperimentPlan desk_plan() {
  ExperimentPlan p;
  p.synth.sigma_size = 300;
  p.synth.corpus_len = 200'000;
  p.synth.n_rules = 300;
  p.synth.conduit_len = 4;
  p.synth.bank_size = 30;
  p.synth.in_rule_repeats = 10;
  p.synth.outside_occurrences = 300;
  p.synth.test_rules = 100;
  p.synth.test_len = 20'000;
  p.train.hidden_dim = 64;
  p.train.embed_dim = 32;
  p.train.epochs = 20;
  p.grid_base = p.synth;
  p.grid_base.corpus_len = 50'000;
  p.grid_epochs = 40;
  return p;
}

/// Full-size corpora (1M tokens, 1000 rules, |Σ| = 1000) and h = d = 200.
inline ExperimentPlan full_plan() {
  ExperimentPlan p;
  p.train.hidden_dim = 200;
  p.train.embed_dim = 200;
  p.train.epochs = 40;
  p.grid_base = p.synth;
  return p;
}

inline std::string to_string(PairTimestep w) { return w == PairTimestep::Right ? "right" : "sentence-final"; }

inline PairTimestep pair_timestep_from_string(const std::string& s) {
  if (s == "right") return PairTimestep::Right;
  if (s == "sentence-final") return PairTimestep::SentenceFinal;
  throw std::invalid_argument("unknown pair timestep '" + s + "' (expected right or sentence-final)");
}

inline nlohmann::json to_json(const ExperimentPlan& p) {
  return {{"preset", p.preset},
          {"seeds", p.seeds},
          {"synth", to_json(p.synth)},
          {"train", to_json(p.train)},
          {"schedule", p.schedule},
          {"fig5_conduit_len", p.fig5_conduit_len},
          {"grid_base", to_json(p.grid_base)},
          {"grid_n", p.grid_n},
          {"grid_k", p.grid_k},
          {"grid_epochs", p.grid_epochs},
          {"cd_context", p.cd_context},
          {"out_dir", p.out_dir.string()},
          {"conllu", p.conllu.string()},
          {"lm_checkpoint", p.lm_checkpoint.string()},
          {"max_seq_dist", p.max_seq_dist},
          {"min_cases", p.min_cases},
          {"pair_timestep", to_string(p.pair_timestep)}};
}

/// Fields missing from `j` keep their value in `p`.
inline ExperimentPlan plan_from_json(const nlohmann::json& j, ExperimentPlan p) {
  p.preset = j.value("preset", p.preset);
  p.seeds = j.value("seeds", p.seeds);
  if (j.contains("synth")) p.synth = synth_spec_from_json(j.at("synth"), p.synth);
  if (j.contains("train")) p.train = train_config_from_json(j.at("train"), p.train);
  p.schedule = j.value("schedule", p.schedule);
  p.fig5_conduit_len = j.value("fig5_conduit_len", p.fig5_conduit_len);
  if (j.contains("grid_base")) p.grid_base = synth_spec_from_json(j.at("grid_base"), p.grid_base);
  p.grid_n = j.value("grid_n", p.grid_n);
  p.grid_k = j.value("grid_k", p.grid_k);
  p.grid_epochs = j.value("grid_epochs", p.grid_epochs);
  p.cd_context = j.value("cd_context", p.cd_context);
  if (j.contains("out_dir")) p.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("conllu")) p.conllu = j.at("conllu").get<std::string>();
  if (j.contains("lm_checkpoint")) p.lm_checkpoint = j.at("lm_checkpoint").get<std::string>();
  p.max_seq_dist = j.value("max_seq_dist", p.max_seq_dist);
  p.min_cases = j.value("min_cases", p.min_cases);
  if (j.contains("pair_timestep")) p.pair_timestep = pair_timestep_from_string(j.at("pair_timestep").get<std::string>());
  return p;
}

// ---------------------------------------------------------------------------
// Metric series

struct MetricPoint {
  std::string metric;
  std::string setting;
  std::uint64_t seed = 0;
  double x = 0.0;
  double y = 0.0;
  std::size_t count = 0;
};

using MetricSeries = std::vector<MetricPoint>;

struct Mean {
  double sum = 0.0;
  std::size_t n = 0;
  void add(double v) {
    sum += v;
    ++n;
  }
  double value() const { return n == 0 ? 0.0 : sum / static_cast<double>(n); }
};

inline void write_series_csv(const std::filesystem::path& path, const MetricSeries& s, const ExperimentPlan& plan) {
  std::ostringstream out;
  out.precision(17);
  out << "metric,setting,seed,x,y,count\n";
  for (const auto& p : s)
    out << p.metric << ',' << p.setting << ',' << p.seed << ',' << p.x << ',' << p.y << ',' << p.count << '\n';
  write_file(path, out.str());
  write_file(sidecar_path(path), to_json(plan).dump(2) + "\n");
}

/// Lookup of one value; throws if absent.
inline const MetricPoint& find_point(const MetricSeries& s, const std::string& metric, const std::string& setting,
                                     std::uint64_t seed, double x) {
  for (const auto& p : s)
    if (p.metric == metric && p.setting == setting && p.seed == seed && p.x == x) return p;
  throw std::out_of_range("no metric point " + metric + "/" + setting + "/seed " + std::to_string(seed) + "/x " +
                          std::to_string(x));
}

inline std::vector<const MetricPoint*> select(const MetricSeries& s, const std::string& metric,
                                              const std::string& setting, std::uint64_t seed) {
  std::vector<const MetricPoint*> out;
  for (const auto& p : s)
    if (p.metric == metric && p.setting == setting && p.seed == seed) out.push_back(&p);
  std::sort(out.begin(), out.end(), [](auto a, auto b) { return a->x < b->x; });
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation on rule instances

/// A slice of a test stream around one rule: `context` background tokens, the
/// open symbol, the conduit and the close symbol.
struct RuleWindow {
  std::vector<TokenId> tokens;
  std::size_t alpha = 0;
  std::size_t pre_close = 0;  // index of the last conduit token
};

inline RuleWindow rule_window(const SynthCorpus& c, const RulePosition& r, std::size_t context) {
  const std::size_t start = r.alpha >= context ? r.alpha - context : 0;
  RuleWindow w;
  w.tokens.assign(c.tokens.begin() + static_cast<std::ptrdiff_t>(start),
                  c.tokens.begin() + static_cast<std::ptrdiff_t>(r.omega + 1));
  w.alpha = r.alpha - start;
  w.pre_close = r.omega - 1 - start;
  return w;
}

/// P(close symbol) at every rule's close position, running the model over
/// the whole stream from the zero state.
inline Mean close_probability(const LstmParams& p, const SynthCorpus& c) {
  Mean m;
  std::vector<bool> pre_close(c.tokens.size(), false);
  for (const auto& r : c.rules) pre_close[r.omega - 1] = true;
  LstmState s = LstmState::zeros(p.hidden_dim());
  for (std::size_t t = 0; t < c.tokens.size(); ++t) {
    s = lstm_cell(p, s, c.tokens[t]);
    if (pre_close[t]) m.add(softmax(output_logits(p, s.h))[Vocab::kOmega]);
  }
  return m;
}

/// CD probability of the close symbol at the pre-close step with `focus`
/// given relative to the open symbol (0 = alpha, 1..k = conduit).
inline Mean cd_close_probability(const LstmParams& p, const SynthCorpus& c, std::size_t context,
                                 std::size_t first, std::size_t last) {
  Mean m;
  for (const auto& r : c.rules) {
    const auto w = rule_window(c, r, context);
    const auto out = cd_run(p, w.tokens, FocusSet::range(w.alpha + first, w.alpha + last), w.pre_close);
    m.add(cd_probability(out, Vocab::kOmega));
  }
  return m;
}

/// Interdependence of the open symbol and its conduit at the pre-close step.
inline Mean alpha_conduit_interdependence(const LstmParams& p, const SynthCorpus& c, std::size_t context) {
  Mean m;
  for (const auto& r : c.rules) {
    const auto w = rule_window(c, r, context);
    InterdepQuery q{w.tokens, FocusSet{w.alpha}, FocusSet::range(w.alpha + 1, w.pre_close), w.pre_close};
    try {
      m.add(interdependence(p, q).value);
    } catch (const UndefinedMeasurement&) {
    }
  }
  return m;
}

/// Mean prefix curve (k + 1 points) over rules.
inline std::vector<Mean> mean_prefix_curve(const LstmParams& p, const SynthCorpus& c, std::size_t k,
                                           std::size_t context) {
  std::vector<Mean> curve(k + 1);
  for (const auto& r : c.rules) {
    const auto w = rule_window(c, r, context);
    const auto v = prefix_curve(p, w.tokens, w.alpha, k);
    for (std::size_t i = 0; i <= k; ++i) curve[i].add(v[i]);
  }
  return curve;
}

/// Mean gradient norm at conduit offsets d = 1..k. With `total` false only
/// the close-symbol error is backpropagated (grad_probe); with `total` true
/// every prediction in the window contributes (total_error_profile).
inline std::vector<Mean> mean_grad_probe(const LstmParams& p, const SynthCorpus& c, std::size_t k,
                                         std::size_t context, bool total = false) {
  std::vector<Mean> out(k);
  for (const auto& r : c.rules) {
    const auto w = rule_window(c, r, context);
    const auto g = total ? total_error_profile(p, w.tokens, w.pre_close, k) : grad_probe(p, w.tokens, w.pre_close, k);
    for (std::size_t d = 0; d < k; ++d) out[d].add(g[d]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training with an on-disk checkpoint cache

using Log = std::function<void(const std::string&)>;

inline Log stderr_log() {
  return [](const std::string& s) { std::cerr << s << std::endl; };
}

/// Trains (or resumes) a model and keeps one checkpoint per epoch in `dir`.
/// The cache is keyed by a fingerprint of the corpus and training config; a
/// mismatch is an error rather than a silent retrain.
class CachedRun {
 public:
  CachedRun(std::filesystem::path dir, std::vector<TokenId> corpus, Vocab vocab, TrainConfig cfg, Log log)
      : dir_(std::move(dir)), corpus_(std::move(corpus)), vocab_(std::move(vocab)), cfg_(cfg), log_(std::move(log)) {
    std::string blob(reinterpret_cast<const char*>(corpus_.data()), corpus_.size() * sizeof(TokenId));
    fingerprint_ = to_json(cfg_);
    fingerprint_["epochs"] = nullptr;  // extending a run keeps its cache
    fingerprint_["corpus_fnv1a"] = fnv1a64(blob);
    fingerprint_["corpus_len"] = corpus_.size();
    const auto meta = dir_ / "run.json";
    if (std::filesystem::exists(meta)) {
      if (nlohmann::json::parse(read_file(meta)) != fingerprint_)
        throw std::runtime_error("checkpoint cache " + dir_.string() +
                                 " was produced by a different corpus or config; remove it to retrain");
    } else {
      write_file(meta, fingerprint_.dump(2) + "\n");
    }
  }

  std::filesystem::path path_for(std::size_t epoch) const {
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03zu.gsck", epoch);
    return dir_ / name;
  }

  /// Parameters after `epoch` epochs, training as far as needed.
  LstmParams at(std::size_t epoch) {
    if (epoch == 0) return Trainer(corpus_, vocab_, cfg_).params();
    if (std::filesystem::exists(path_for(epoch))) return load_checkpoint(path_for(epoch)).params;
    std::size_t have = epoch;
    while (have > 0 && !std::filesystem::exists(path_for(have))) --have;
    Trainer trainer(corpus_, vocab_, cfg_);
    if (have > 0) trainer.resume(load_checkpoint(path_for(have)));
    while (trainer.epoch() < epoch) {
      const auto t0 = std::chrono::steady_clock::now();
      const double loss = trainer.run_epoch();
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      save_checkpoint(trainer.checkpoint({{"train_loss", loss}}), path_for(trainer.epoch()));
      if (log_) {
        std::ostringstream msg;
        msg.precision(4);
        msg << "  " << dir_.filename().string() << " epoch " << trainer.epoch() << " loss " << loss << " ("
            << secs << " s)";
        log_(msg.str());
      }
    }
    return trainer.params();
  }

  double train_loss(std::size_t epoch) const { return load_checkpoint(path_for(epoch)).metrics.at("train_loss"); }

 private:
  std::filesystem::path dir_;
  std::vector<TokenId> corpus_;
  Vocab vocab_;
  TrainConfig cfg_;
  Log log_;
  nlohmann::json fingerprint_;
};

// ---------------------------------------------------------------------------
// Synthetic presets

inline SynthSpec spec_for(const ExperimentPlan& plan, Setting setting, std::size_t k, std::uint64_t seed) {
  SynthSpec s = plan.synth;
  s.setting = setting;
  s.conduit_len = k;
  s.seed = seed;
  return s;
}

inline TrainConfig config_for(const ExperimentPlan& plan, std::uint64_t seed) {
  TrainConfig c = plan.train;
  c.seed = seed;
  return c;
}

inline std::string run_label(Setting s, std::size_t k, std::uint64_t seed) {
  return to_string(s) + "_k" + std::to_string(k) + "_seed" + std::to_string(seed);
}

/// Training corpus, test sets and cached run for one (setting, k, seed).
struct SettingRun {
  SynthSpec spec;
  SynthCorpus train;
  TestSets tests;
  std::unique_ptr<CachedRun> run;
};

inline SettingRun make_setting_run(const ExperimentPlan& plan, Setting setting, std::size_t k, std::uint64_t seed,
                                   const Log& log) {
  SettingRun r;
  r.spec = spec_for(plan, setting, k, seed);
  r.train = gen_train(r.spec);
  r.tests = gen_tests(r.spec, r.train);
  r.run = std::make_unique<CachedRun>(plan.out_dir / "checkpoints" / run_label(setting, k, seed), r.train.tokens,
                                      Vocab::synthetic(r.spec.sigma_size), config_for(plan, seed), log);
  return r;
}

/// Per-epoch metrics shared by fig3, fig4, fig6 and appB (one model pair per
/// seed, conduit length plan.synth.conduit_len).
inline MetricSeries run_main_settings(const ExperimentPlan& plan, const Log& log = stderr_log()) {
  plan.validate();
  const std::size_t k = plan.synth.conduit_len;
  MetricSeries out;
  for (std::uint64_t seed : plan.seeds) {
    for (Setting setting : {Setting::Unfamiliar, Setting::Familiar}) {
      if (log) log("[main] " + run_label(setting, k, seed));
      auto r = make_setting_run(plan, setting, k, seed, log);
      const std::string name = to_string(setting);
      for (std::size_t e : plan.eval_epochs()) {
        const LstmParams p = r.run->at(e);
        const double x = static_cast<double>(e);
        auto push = [&](const std::string& metric, const Mean& m) {
          out.push_back({metric, name, seed, x, m.value(), m.n});
        };
        push("train_loss", Mean{r.run->train_loss(e), 1});
        push("fig3_in_p_close", close_probability(p, r.tests.in_domain));
        push("fig3_out_p_close", close_probability(p, r.tests.out_domain));
        push("fig4_out_cd_alpha", cd_close_probability(p, r.tests.out_domain, plan.cd_context, 0, 0));
        push("fig6_in_interdep", alpha_conduit_interdependence(p, r.tests.in_domain, plan.cd_context));
        for (const bool total : {false, true}) {
          const std::string tag = total ? "appB_total" : "appB_grad";
          const auto g = mean_grad_probe(p, r.tests.in_domain, k, plan.cd_context, total);
          Mean all;
          for (std::size_t d = 0; d < k; ++d) {
            out.push_back({tag + "_d" + std::to_string(d + 1), name, seed, x, g[d].value(), g[d].n});
            all.add(g[d].value());
          }
          out.push_back({tag + "_mean", name, seed, x, all.value(), g[0].n});
        }
      }
    }
  }
  return out;
}

/// Mean prefix curves after the final epoch, conduit length
/// plan.fig5_conduit_len, on both test sets.
inline MetricSeries run_fig5(const ExperimentPlan& plan, const Log& log = stderr_log()) {
  plan.validate();
  const std::size_t k = plan.fig5_conduit_len;
  MetricSeries out;
  for (std::uint64_t seed : plan.seeds) {
    for (Setting setting : {Setting::Unfamiliar, Setting::Familiar}) {
      if (log) log("[fig5] " + run_label(setting, k, seed));
      auto r = make_setting_run(plan, setting, k, seed, log);
      const LstmParams p = r.run->at(plan.train.epochs);
      for (const auto& [metric, test] : {std::pair{"fig5_prefix_in", &r.tests.in_domain},
                                         std::pair{"fig5_prefix_out", &r.tests.out_domain}}) {
        const auto curve = mean_prefix_curve(p, *test, k, plan.cd_context);
        for (std::size_t i = 0; i <= k; ++i)
          out.push_back({metric, to_string(setting), seed, static_cast<double>(i), curve[i].value(), curve[i].n});
      }
    }
  }
  return out;
}

/// CD probability of the close symbol from the open symbol alone and from the
/// conduit alone, per grid point (n, k), after plan.grid_epochs epochs.
/// Metric x encodes the point as n * 1000 + k.
inline MetricSeries run_fig8grid(const ExperimentPlan& plan, const Log& log = stderr_log()) {
  plan.validate();
  MetricSeries out;
  for (std::uint64_t seed : plan.seeds) {
    SynthSpec base = plan.grid_base;
    base.seed = seed;
    const Grid grid = gen_grid(base, plan.grid_n, plan.grid_k);
    for (const auto& msg : grid.skipped)
      if (log) log("[fig8grid] skipped " + msg);
    for (const auto& pt : grid.points) {
      const std::string label = "grid_n" + std::to_string(pt.n) + "_k" + std::to_string(pt.k) + "_seed" +
                                std::to_string(seed);
      if (log) log("[fig8grid] " + label);
      TrainConfig cfg = config_for(plan, seed);
      cfg.epochs = plan.grid_epochs;
      cfg.bptt_len = std::max(cfg.bptt_len, pt.k + 2);
      CachedRun run(plan.out_dir / "checkpoints" / label, pt.corpus.tokens, Vocab::synthetic(pt.spec.sigma_size),
                    cfg, log);
      const LstmParams p = run.at(plan.grid_epochs);
      const TestSets tests = gen_tests(pt.spec, pt.corpus);
      const double x = static_cast<double>(pt.n * 1000 + pt.k);
      const auto a = cd_close_probability(p, tests.in_domain, plan.cd_context, 0, 0);
      const auto q = cd_close_probability(p, tests.in_domain, plan.cd_context, 1, pt.k);
      out.push_back({"fig8_alpha", "unfamiliar", seed, x, a.value(), a.n});
      out.push_back({"fig8_conduit", "unfamiliar", seed, x, q.value(), q.n});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Directional checks on synthetic results

struct Check {
  std::string name;
  std::vector<bool> per_seed;
  std::vector<std::string> detail;
  bool gating = true;  // informational checks are reported but do not decide

  bool majority() const {
    std::size_t yes = 0;
    for (bool b : per_seed) yes += b;
    return !per_seed.empty() && 2 * yes > per_seed.size();
  }
};

/// First scheduled epoch whose value exceeds `threshold`, or nullopt.
inline std::optional<double> first_epoch_above(const std::vector<const MetricPoint*>& series, double threshold) {
  for (const auto* p : series)
    if (p->y > threshold) return p->x;
  return std::nullopt;
}

inline std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

inline std::vector<Check> synthetic_checks(const ExperimentPlan& plan, const MetricSeries& main,
                                           const MetricSeries& fig5, const MetricSeries& grid) {
  const double last = static_cast<double>(plan.eval_epochs().back());
  const double chance = 1.0 / static_cast<double>(Vocab::synthetic(plan.synth.sigma_size).size());
  Check a{"fig3 out-domain final P(close): unfamiliar >= 2x familiar", {}, {}};
  Check b{"fig4 epoch CD P(close|open) first exceeds 10x chance: familiar <= unfamiliar", {}, {}};
  Check c{"fig5 in-domain prefix-curve rise: familiar >= 2x unfamiliar (and > 0)", {}, {}};
  Check c_out{"fig5 out-domain prefix-curve rise: familiar >= 2x unfamiliar (and > 0)", {}, {}, false};
  Check d{"fig6 final interdependence: familiar > unfamiliar, familiar last > first", {}, {}};
  Check e{"fig8grid monotonicities in n and k", {}, {}};
  Check f{"appB final mean total-error gradient at conduit steps: familiar <= unfamiliar", {}, {}};
  Check f_omega{"appB final mean close-symbol-only gradient at conduit steps: familiar <= unfamiliar", {}, {}, false};

  for (std::uint64_t seed : plan.seeds) {
    const std::string sd = "seed " + std::to_string(seed) + ": ";
    {
      const double u = find_point(main, "fig3_out_p_close", "unfamiliar", seed, last).y;
      const double fa = find_point(main, "fig3_out_p_close", "familiar", seed, last).y;
      a.per_seed.push_back(u >= 2.0 * fa);
      a.detail.push_back(sd + "unfamiliar " + fmt(u) + ", familiar " + fmt(fa));
    }
    {
      const auto fe = first_epoch_above(select(main, "fig4_out_cd_alpha", "familiar", seed), 10.0 * chance);
      const auto ue = first_epoch_above(select(main, "fig4_out_cd_alpha", "unfamiliar", seed), 10.0 * chance);
      b.per_seed.push_back(fe.has_value() && (!ue.has_value() || *fe <= *ue));
      b.detail.push_back(sd + "familiar " + (fe ? fmt(*fe) : std::string("never")) + ", unfamiliar " +
                         (ue ? fmt(*ue) : std::string("never")));
    }
    if (!fig5.empty()) {
      for (auto [check, metric] : {std::pair{&c, "fig5_prefix_in"}, std::pair{&c_out, "fig5_prefix_out"}}) {
        auto rise = [&](const std::string& s) {
          const auto pts = select(fig5, metric, s, seed);
          return pts.back()->y - pts.front()->y;
        };
        const double fr = rise("familiar"), ur = rise("unfamiliar");
        check->per_seed.push_back(fr > 0.0 && fr >= 2.0 * ur);
        check->detail.push_back(sd + "familiar rise " + fmt(fr) + ", unfamiliar rise " + fmt(ur));
      }
    }
    {
      const auto fam = select(main, "fig6_in_interdep", "familiar", seed);
      const double uf = find_point(main, "fig6_in_interdep", "unfamiliar", seed, last).y;
      const double ff = fam.back()->y, f0 = fam.front()->y;
      d.per_seed.push_back(ff > uf && ff > f0);
      d.detail.push_back(sd + "familiar " + fmt(f0) + " -> " + fmt(ff) + ", unfamiliar final " + fmt(uf));
    }
    if (!grid.empty()) {
      auto val = [&](const std::string& m, std::size_t n, std::size_t k) {
        return find_point(grid, m, "unfamiliar", seed, static_cast<double>(n * 1000 + k)).y;
      };
      const auto& ns = plan.grid_n;
      const auto& ks = plan.grid_k;
      bool ok = true;
      std::string why;
      // conduit-only probability strictly decreasing in k at the smallest n
      for (std::size_t i = 1; i < ks.size(); ++i)
        if (!(val("fig8_conduit", ns.front(), ks[i]) < val("fig8_conduit", ns.front(), ks[i - 1]))) {
          ok = false;
          why += " conduit-only not decreasing in k at n=" + std::to_string(ns.front()) + ";";
        }
      // open-symbol probability higher at the largest n than at the smallest, for every k
      for (std::size_t k : ks)
        if (!(val("fig8_alpha", ns.back(), k) > val("fig8_alpha", ns.front(), k))) {
          ok = false;
          why += " open-only not increasing in n at k=" + std::to_string(k) + ";";
        }
      // open-symbol probability averaged over n strictly decreasing in k
      std::vector<double> by_k;
      for (std::size_t k : ks) {
        double s = 0.0;
        for (std::size_t n : ns) s += val("fig8_alpha", n, k);
        by_k.push_back(s / static_cast<double>(ns.size()));
      }
      for (std::size_t i = 1; i < by_k.size(); ++i)
        if (!(by_k[i] < by_k[i - 1])) {
          ok = false;
          why += " open-only (mean over n) not decreasing in k;";
        }
      e.per_seed.push_back(ok);
      e.detail.push_back(sd + (ok ? std::string("all hold") : why));
    }
    for (auto [check, metric] : {std::pair{&f, "appB_total_mean"}, std::pair{&f_omega, "appB_grad_mean"}}) {
      const double fg = find_point(main, metric, "familiar", seed, last).y;
      const double ug = find_point(main, metric, "unfamiliar", seed, last).y;
      check->per_seed.push_back(fg <= ug);
      check->detail.push_back(sd + "familiar " + fmt(fg) + ", unfamiliar " + fmt(ug));
    }
  }
  std::vector<Check> out{a, b};
  if (!fig5.empty()) {
    out.push_back(c);
    out.push_back(c_out);
  }
  out.push_back(d);
  if (!grid.empty()) out.push_back(e);
  out.push_back(f);
  out.push_back(f_omega);
  return out;
}

inline nlohmann::json to_json(const std::vector<Check>& checks) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : checks) j.push_back({{"check", c.name}, {"per_seed", c.per_seed}, {"majority", c.majority()}, {"gating", c.gating}, {"detail", c.detail}});
  return j;
}

/// Runs every synthetic preset and writes all series plus the checks.
struct SyntheticReport {
  MetricSeries main, fig5, grid;
  std::vector<Check> checks;
};

inline SyntheticReport run_synthetic(const ExperimentPlan& plan, const Log& log = stderr_log()) {
  SyntheticReport r;
  r.main = run_main_settings(plan, log);
  write_series_csv(plan.out_dir / "main.csv", r.main, plan);
  r.fig5 = run_fig5(plan, log);
  write_series_csv(plan.out_dir / "fig5.csv", r.fig5, plan);
  r.grid = run_fig8grid(plan, log);
  write_series_csv(plan.out_dir / "fig8grid.csv", r.grid, plan);
  r.checks = synthetic_checks(plan, r.main, r.fig5, r.grid);
  write_file(plan.out_dir / "checks.json", to_json(r.checks).dump(2) + "\n");
  return r;
}

// ---------------------------------------------------------------------------
// Treebank preset

struct TreebankReport {
  std::vector<StratumCell> by_class;
  std::vector<StratumCell> pooled;
  std::size_t sentences = 0;
  std::size_t records = 0;
  std::size_t undefined = 0;
  std::map<std::size_t, double> spearman_by_seq_dist;  // only strata with >= 5 surviving cells
  std::vector<double> mean_by_seq_dist;                // index d - 1
  bool syntax_trend_ok = false;
  bool distance_trend_ok = false;
};

inline TreebankReport analyze_treebank(const LstmParams& p, const Vocab& vocab,
                                       const std::vector<DepSentence>& sentences, const ExperimentPlan& plan,
                                       const Log& log = stderr_log()) {
  TreebankReport rep;
  rep.sentences = sentences.size();
  const auto sweep = sweep_treebank(p, vocab, sentences, plan.max_seq_dist, plan.pair_timestep);
  rep.records = sweep.records.size();
  rep.undefined = sweep.undefined;
  rep.by_class = stratify(sweep.records, plan.min_cases, StrataBy::PairClass);
  rep.pooled = stratify(sweep.records, plan.min_cases, StrataBy::Pooled);

  std::ostringstream rec, cls, pooled;
  write_records_csv(rec, sweep.records);
  write_strata_csv(cls, rep.by_class);
  write_strata_csv(pooled, rep.pooled);
  write_file(plan.out_dir / "fig9_pairs.csv", rec.str());
  write_file(plan.out_dir / "fig9_strata.csv", cls.str());
  write_file(plan.out_dir / "fig9_pooled.csv", pooled.str());
  write_file(sidecar_path(plan.out_dir / "fig9_strata.csv"), to_json(plan).dump(2) + "\n");

  // Syntactic trend: within each sequential distance >= 2, rank correlation of
  // syntactic distance with the pooled cell mean over surviving cells.
  rep.syntax_trend_ok = true;
  std::size_t tested = 0;
  for (std::size_t d = 2; d <= plan.max_seq_dist; ++d) {
    std::vector<double> xs, ys;
    for (const auto& c : rep.pooled)
      if (c.key.seq_dist == d && !c.suppressed) {
        xs.push_back(static_cast<double>(c.key.syn_dist));
        ys.push_back(c.mean);
      }
    if (xs.size() < 5) continue;
    const double rho = spearman(xs, ys);
    rep.spearman_by_seq_dist[d] = rho;
    ++tested;
    if (!(rho < 0.0)) rep.syntax_trend_ok = false;
  }
  if (tested == 0) rep.syntax_trend_ok = false;

  std::vector<Mean> by_d(plan.max_seq_dist);
  for (const auto& r : sweep.records)
    if (r.cls != PairClass::Other) by_d[r.seq_dist - 1].add(r.value);
  rep.distance_trend_ok = true;
  for (std::size_t d = 0; d < by_d.size(); ++d) {
    rep.mean_by_seq_dist.push_back(by_d[d].value());
    if (d > 0 && rep.mean_by_seq_dist[d] > rep.mean_by_seq_dist[d - 1]) rep.distance_trend_ok = false;
  }
  if (log)
    log("[fig9] " + std::to_string(rep.sentences) + " sentences, " + std::to_string(rep.records) + " pairs, " +
        std::to_string(rep.undefined) + " undefined");
  return rep;
}

inline nlohmann::json to_json(const TreebankReport& r) {
  nlohmann::json rho = nlohmann::json::object();
  for (const auto& [d, v] : r.spearman_by_seq_dist) rho[std::to_string(d)] = v;
  return {{"sentences", r.sentences},
          {"records", r.records},
          {"undefined", r.undefined},
          {"spearman_by_seq_dist", rho},
          {"mean_by_seq_dist", r.mean_by_seq_dist},
          {"syntax_trend_ok", r.syntax_trend_ok},
          {"distance_trend_ok", r.distance_trend_ok}};
}

}  // namespace cdlab
