// cdlab: corpus generation, training, decomposition queries and experiment presets.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdlab/cd.hpp"
#include "cdlab/checkpoint.hpp"
#include "cdlab/conllu.hpp"
#include "cdlab/harness.hpp"
#include "cdlab/interdep.hpp"
#include "cdlab/synth.hpp"
#include "cdlab/text.hpp"
#include "cdlab/train.hpp"

using namespace cdlab;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string config;
};

ExperimentPlan load_plan(const Globals& g, const std::string& preset) {
  ExperimentPlan plan = desk_plan();
  if (preset == "full") plan = full_plan();
  if (!g.config.empty()) plan = plan_from_json(nlohmann::json::parse(read_file(g.config)), plan);
  if (g.seed) plan.seeds = {*g.seed};
  if (!g.out.empty()) plan.out_dir = g.out;
  plan.preset = preset;
  return plan;
}

std::vector<std::size_t> parse_positions(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      out.push_back(std::stoul(item));
    } else {
      const std::size_t a = std::stoul(item.substr(0, dash)), b = std::stoul(item.substr(dash + 1));
      if (b < a) throw std::invalid_argument("bad position range '" + item + "'");
      for (std::size_t i = a; i <= b; ++i) out.push_back(i);
    }
  }
  return out;
}

std::vector<TokenId> parse_tokens(const std::string& text, const Vocab& vocab) {
  std::vector<TokenId> ids;
  std::istringstream in(text);
  std::string w;
  while (in >> w) {
    if (!vocab.contains(w) && w != std::string(Vocab::kUnkToken))
      std::cerr << "warning: '" << w << "' not in vocabulary, using <unk>\n";
    ids.push_back(vocab.id(w));
  }
  if (ids.empty()) throw std::invalid_argument("empty token sequence");
  return ids;
}

MetricSeries only(const MetricSeries& s, const std::string& prefix) {
  MetricSeries out;
  for (const auto& p : s)
    if (p.metric.rfind(prefix, 0) == 0 || p.metric == "train_loss") out.push_back(p);
  return out;
}

void print_checks(const std::vector<Check>& checks) {
  for (const auto& c : checks) {
    std::cout << (c.majority() ? "PASS " : "FAIL ") << (c.gating ? "" : "(informational) ") << c.name << '\n';
    for (const auto& d : c.detail) std::cout << "    " << d << '\n';
  }
}

std::vector<DepSentence> load_treebank(const fs::path& path) {
  const auto parsed = parse_conllu(read_file(path));
  for (const auto& d : parsed.diagnostics) std::cerr << path.string() << ':' << d.line << ": " << d.message << '\n';
  return parsed.sentences;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LSTM contextual decomposition and interdependence lab"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed (overrides the plan's seed list)");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--config", g.config, "JSON file with ExperimentPlan fields")->check(CLI::ExistingFile);

  // gen-synth
  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic training corpus and its two test sets");
  std::string setting = "unfamiliar";
  std::optional<std::size_t> gen_k;
  gen->add_option("--setting", setting, "familiar or unfamiliar");
  gen->add_option("--k", gen_k, "Conduit length");

  // train
  auto* tr = app.add_subcommand("train", "Train a language model and write one checkpoint per epoch");
  std::string corpus_path, text_path;
  std::size_t vocab_size = 10000;
  std::optional<std::size_t> epochs;
  auto* src = tr->add_option_group("source");
  src->add_option("--corpus", corpus_path, "Synthetic corpus written by gen-synth")->check(CLI::ExistingFile);
  src->add_option("--text", text_path, "Plain-text English corpus")->check(CLI::ExistingFile);
  src->require_option(1);
  tr->add_option("--vocab-size", vocab_size, "Vocabulary size for --text (reserved ids included)");
  tr->add_option("--epochs", epochs, "Number of epochs (overrides the plan)");

  // decompose
  auto* dec = app.add_subcommand("decompose", "Contextual decomposition of one sequence");
  std::string ckpt, tokens, focus;
  std::optional<std::size_t> at;
  std::vector<std::string> targets;
  dec->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  dec->add_option("--tokens", tokens, "Whitespace-separated tokens")->required();
  dec->add_option("--focus", focus, "Focus positions, e.g. 0,3-5")->required();
  dec->add_option("--at", at, "Timestep (default: last)");
  dec->add_option("--targets", targets, "Tokens whose relevant probability to report");

  // interdep
  auto* itd = app.add_subcommand("interdep", "Interdependence of two disjoint position sets");
  std::string set_a, set_b;
  itd->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  itd->add_option("--tokens", tokens)->required();
  itd->add_option("--a", set_a)->required();
  itd->add_option("--b", set_b)->required();
  itd->add_option("--at", at);

  // run
  auto* run = app.add_subcommand("run", "Run an experiment preset");
  std::string preset;
  run->add_option("preset", preset, "fig3 fig4 fig5 fig6 appB fig8grid fig9 synthetic")
      ->required()
      ->check(CLI::IsMember({"fig3", "fig4", "fig5", "fig6", "appB", "fig8grid", "fig9", "synthetic"}));
  bool full_scale = false;
  run->add_flag("--full-scale", full_scale, "Start from the full-size plan instead of the desk plan");

  // ud-analyze
  auto* uda = app.add_subcommand("ud-analyze", "Pair interdependence over a CoNLL-U treebank");
  std::string conllu;
  uda->add_option("--checkpoint", ckpt)->check(CLI::ExistingFile);
  uda->add_option("--conllu", conllu)->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      ExperimentPlan plan = load_plan(g, "gen-synth");
      SynthSpec spec = plan.synth;
      spec.setting = setting_from_string(setting);
      if (gen_k) spec.conduit_len = *gen_k;
      spec.seed = plan.seeds.front();
      const auto train = gen_train(spec);
      const auto tests = gen_tests(spec, train);
      const auto audit = audit_corpus(train, spec.corpus_len, spec.conduit_len);
      if (!audit.ok()) throw std::runtime_error("generated corpus failed its audit");
      write_corpus(plan.out_dir / "train.txt", spec, train);
      write_corpus(plan.out_dir / "test_in.txt", spec, tests.in_domain);
      write_corpus(plan.out_dir / "test_out.txt", spec, tests.out_domain);
      std::cout << "wrote " << (plan.out_dir / "train.txt").string() << " (" << train.tokens.size() << " tokens, "
                << train.rules.size() << " rules)\n";
    } else if (tr->parsed()) {
      ExperimentPlan plan = load_plan(g, "train");
      TrainConfig cfg = plan.train;
      cfg.seed = plan.seeds.front();
      if (epochs) cfg.epochs = *epochs;
      std::vector<TokenId> ids;
      Vocab vocab;
      if (!corpus_path.empty()) {
        SynthSpec spec;
        ids = read_corpus(corpus_path, &spec).tokens;
        vocab = Vocab::synthetic(spec.sigma_size);
      } else {
        const auto words = tokenize_text(read_file(text_path));
        vocab = build_vocab(words, vocab_size);
        ids = encode_words(words, vocab);
        std::cerr << words.size() << " tokens, vocabulary " << vocab.size() << '\n';
      }
      CachedRun cache(plan.out_dir, ids, vocab, cfg, stderr_log());
      cache.at(cfg.epochs);
      std::cout << "final checkpoint " << cache.path_for(cfg.epochs).string() << '\n';
    } else if (dec->parsed()) {
      const auto ck = load_checkpoint(ckpt);
      const auto seq = parse_tokens(tokens, ck.vocab);
      const std::size_t t = at.value_or(seq.size() - 1);
      const FocusSet f(parse_positions(focus));
      std::vector<TokenId> ids;
      for (const auto& w : targets) ids.push_back(ck.vocab.id(w));
      std::cout << cd_record(cd_run(ck.params, seq, f, t), f, t, ids).dump(2) << '\n';
    } else if (itd->parsed()) {
      const auto ck = load_checkpoint(ckpt);
      const auto seq = parse_tokens(tokens, ck.vocab);
      const InterdepQuery q{seq, FocusSet(parse_positions(set_a)), FocusSet(parse_positions(set_b)),
                            at.value_or(seq.size() - 1)};
      const auto r = interdependence(ck.params, q);
      std::cout << nlohmann::json{{"interdependence", r.value},
                                  {"norm_a", r.norm_a},
                                  {"norm_b", r.norm_b},
                                  {"norm_ab", r.norm_ab}}
                       .dump(2)
                << '\n';
    } else if (run->parsed()) {
      ExperimentPlan plan = load_plan(g, full_scale ? "full" : preset);
      plan.preset = preset;
      if (preset == "synthetic") {
        const auto rep = run_synthetic(plan);
        print_checks(rep.checks);
      } else if (preset == "fig5") {
        write_series_csv(plan.out_dir / "fig5.csv", run_fig5(plan), plan);
      } else if (preset == "fig8grid") {
        write_series_csv(plan.out_dir / "fig8grid.csv", run_fig8grid(plan), plan);
      } else if (preset == "fig9") {
        if (plan.conllu.empty() || plan.lm_checkpoint.empty())
          throw std::invalid_argument("fig9 needs conllu and lm_checkpoint in the --config plan");
        const auto ck = load_checkpoint(plan.lm_checkpoint);
        const auto rep = analyze_treebank(ck.params, ck.vocab, load_treebank(plan.conllu), plan);
        write_file(plan.out_dir / "fig9_summary.json", to_json(rep).dump(2) + "\n");
        std::cout << to_json(rep).dump(2) << '\n';
      } else {
        const auto all = run_main_settings(plan);
        write_series_csv(plan.out_dir / (preset + ".csv"), only(all, preset), plan);
      }
      std::cout << "results in " << plan.out_dir.string() << '\n';
    } else if (uda->parsed()) {
      ExperimentPlan plan = load_plan(g, "fig9");
      if (!ckpt.empty()) plan.lm_checkpoint = ckpt;
      if (!conllu.empty()) plan.conllu = conllu;
      if (plan.conllu.empty() || plan.lm_checkpoint.empty())
        throw std::invalid_argument("ud-analyze needs --checkpoint and --conllu");
      const auto ck = load_checkpoint(plan.lm_checkpoint);
      const auto rep = analyze_treebank(ck.params, ck.vocab, load_treebank(plan.conllu), plan);
      write_file(plan.out_dir / "fig9_summary.json", to_json(rep).dump(2) + "\n");
      std::cout << to_json(rep).dump(2) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "cdlab: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
