// npt: command-line front end.
//
//   npt etf       --k K --d D --seed S
//   npt gradcheck [--config C] [--seed S]
//   npt train     [--config C] [--tau T] [--method M] [--seed S] [--out DIR]
//   npt b2n       [--config C] [--tau T] [--method M] [--seed S] [--out DIR]
//   npt sweep     [--config C] [--out DIR] [--workers W]
//   npt plot      --out DIR [--config C]
//
// Exit codes: 0 ok, 1 argument error, 2 numerical abort, 3 partial sweep failure.

#include "npt/npt.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

enum Exit { kOk = 0, kArgument = 1, kNumerical = 2, kPartial = 3 };

struct Options {
  std::string config;
  std::optional<double> tau;
  std::optional<std::string> method;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<unsigned> workers;
  npt::Index k = 5, d = 8;
};

npt::ExperimentConfig load_config(const Options& o) {
  npt::ExperimentConfig c;
  if (!o.config.empty()) c = npt::load_experiment_config(o.config);
  if (o.out) c.out_dir = *o.out;
  if (o.workers) c.workers = *o.workers;
  c.validate();
  return c;
}

npt::RunSpec single_spec(const Options& o, const npt::ExperimentConfig& c) {
  npt::RunSpec s;
  s.tau = o.tau.value_or(c.taus.back());
  s.method = npt::method_from_string(o.method.value_or("npt"));
  s.seed = o.seed.value_or(c.seeds.front());
  s.weights = s.method == npt::Method::Npt ? c.npt_weights().front() : npt::WeightSetting{0.0, 0.0};
  if (!(s.tau > 0.0 && s.tau <= 1.0)) throw npt::ArgumentError("--tau must lie in (0, 1]");
  return s;
}

int cmd_etf(const Options& o) {
  const npt::EtfFrame f = npt::build_etf(o.k, o.d, o.seed.value_or(0));
  const npt::EtfCheck chk = npt::check_etf(f);
  std::cout << "K=" << f.num_classes << " d=" << f.dim << " seed=" << f.rotation_seed << "\n";
  std::cout << "gram:\n" << f.gram() << "\n";
  std::cout << "max |gram - target| = " << chk.max_gram_deviation << "\n"
            << "max |norm - 1|      = " << chk.max_norm_deviation << "\n"
            << "|column sum|        = " << chk.column_sum_norm << "\n";
  const bool ok = chk.ok(1e-9);
  std::cout << (ok ? "ok" : "FAILED") << "\n";
  return ok ? kOk : kNumerical;
}

int cmd_gradcheck(const Options& o) {
  npt::ModelConfig mc;
  npt::LossWeights w;
  if (!o.config.empty()) {
    const npt::ExperimentConfig c = load_config(o);
    mc = c.model;
    w = c.train.weights;
  } else {
    mc.num_classes = 4;
    mc.context_tokens = 2;
    mc.token_dim = 8;
    mc.rep_dim = 16;
    mc.raw_dim = 16;
  }
  mc.init_seed = o.seed.value_or(0);
  npt::ModelParams p = npt::init_model(mc);
  npt::Rng rng(mc.init_seed + 1);
  p.context = npt::gaussian_vector(p.context.size(), 0.5, rng);
  p.vision_prompt = npt::gaussian_vector(p.vision_prompt.size(), 0.5, rng);
  npt::Batch b;
  const npt::Index n = 20;
  b.features = npt::gaussian_matrix(mc.raw_dim, n, 1.0, rng);
  for (npt::Index i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(i % mc.num_classes));
  for (npt::Index k = 0; k < mc.num_classes; ++k) b.class_ids.push_back(static_cast<int>(k));
  const npt::ForwardPass f = npt::forward(p, b);
  double worst = 0.0;
  for (auto comp : {npt::LossComponent::Clip, npt::LossComponent::Lc, npt::LossComponent::Mi,
                    npt::LossComponent::Total}) {
    const auto rep = npt::rep_grad_check(f.image.reps, b.labels, f.text.reps, w, mc.lambda_temp, 1e-5, comp);
    const auto par = npt::grad_check(p, b, w, 1e-5, comp);
    std::cout << npt::to_string(comp) << ": rep-level " << rep.max_rel_error << " (" << rep.worst_coordinate
              << "), param-level " << par.max_rel_error << " (" << par.worst_coordinate << ")\n";
    worst = std::max({worst, rep.max_rel_error, par.max_rel_error});
  }
  std::cout << "max relative error " << worst << (worst <= 1e-5 ? " ok" : " FAILED") << "\n";
  return worst <= 1e-5 ? kOk : kNumerical;
}

int cmd_train(const Options& o) {
  const npt::ExperimentConfig c = load_config(o);
  const npt::RunSpec spec = single_spec(o, c);
  npt::RunSetup s = npt::prepare_run(c, spec);
  const npt::Batch batch = npt::make_batch(s.train_set, s.split.base_ids);
  const npt::TrainResult tr = npt::train(s.init, batch, s.train);
  const auto& last = tr.trajectory.rows.back();
  const double base_acc = npt::evaluate(tr.params, s.base_test, s.split.base_ids);
  std::cout << "steps=" << s.train.steps << " loss " << tr.trajectory.rows.front().loss.total << " -> "
            << last.loss.total << ", base train acc " << last.base_train_acc << ", base test acc " << base_acc
            << "\n";
  if (o.out) {
    const std::filesystem::path dir(*o.out);
    npt::detail::ensure_dir(dir);
    npt::save_checkpoint((dir / "checkpoint.json").string(), tr.params);
    npt::save_dataset((dir / "train_set.csv").string(), s.train_set);
    std::ostringstream traj;
    tr.trajectory.write_csv(traj);
    npt::detail::write_text(dir / "trajectory.csv", traj.str());
    const npt::CollapseReport rep =
        npt::collapse_report(npt::representations(tr.params, s.base_test, s.split.base_ids));
    npt::detail::write_text(dir / "collapse_base.json", npt::to_json(rep).dump(2) + "\n");
    std::cout << "wrote " << dir.string() << "\n";
  }
  return kOk;
}

int cmd_b2n(const Options& o) {
  const npt::ExperimentConfig c = load_config(o);
  const npt::RunSpec spec = single_spec(o, c);
  const npt::RunRow row = npt::run_base_to_novel(c, spec);
  std::ostringstream csv;
  npt::write_runs_csv(csv, {row});
  std::cout << csv.str();
  if (o.out) {
    npt::detail::ensure_dir(*o.out);
    npt::detail::write_text(std::filesystem::path(*o.out) / "run.csv", csv.str());
    npt::detail::write_text(std::filesystem::path(*o.out) / "collapse_novel.json",
                            npt::to_json(row.novel).dump(2) + "\n");
  }
  if (row.ok) return kOk;
  std::cerr << "run failed: " << row.error << "\n";
  return row.error.rfind(npt::kNumericalAbortTag, 0) == 0 ? kNumerical : kArgument;
}

int cmd_sweep(const Options& o) {
  const npt::ExperimentConfig c = load_config(o);
  std::size_t done = 0;
  const std::size_t total = npt::sweep_specs(c).size();
  const npt::ExperimentReport rep = npt::run_sweep_rows(c, [&](const npt::RunRow& r) {
    ++done;
    std::cerr << "[" << done << "/" << total << "] tau=" << r.spec.tau << " " << npt::to_string(r.spec.method)
              << " w=(" << r.spec.weights.w1 << "," << r.spec.weights.w2 << ") seed=" << r.spec.seed << " "
              << (r.ok ? "hm=" + std::to_string(r.harmonic_mean) : "FAILED: " + r.error) << "\n";
  });
  npt::write_sweep_outputs(c, rep, npt::representative_panels(c), c.out_dir);
  for (const auto& g : rep.groups)
    std::cout << "tau=" << g.key.tau << " " << npt::to_string(g.key.method) << " w=(" << g.key.weights.w1 << ","
              << g.key.weights.w2 << ") runs=" << g.runs << " failed=" << g.failed
              << " hm=" << g.metrics.at("harmonic_mean").mean << " novel_acc=" << g.metrics.at("novel_acc").mean
              << " novel_lcd=" << g.metrics.at("novel_delta_lcd").mean
              << " novel_mid=" << g.metrics.at("novel_mid_error").mean << "\n";
  for (const auto& w : rep.win_rates)
    std::cout << "wins tau=" << w.tau << " w=(" << w.weights.w1 << "," << w.weights.w2 << "): " << w.wins << "/"
              << w.pairs << "\n";
  std::cout << "wrote " << c.out_dir << "\n";
  return rep.failed() > 0 ? kPartial : kOk;
}

int cmd_plot(const Options& o) {
  if (!o.out) throw npt::ArgumentError("plot needs --out <sweep output directory>");
  const npt::ExperimentReport rep = npt::load_report(*o.out);
  std::vector<npt::ProjectionPanel> panels;
  if (!o.config.empty()) panels = npt::representative_panels(load_config(o));
  npt::emit_plots(rep, panels, *o.out);
  std::cout << "re-rendered figures in " << *o.out << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural-collapse prompt tuning toy"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--tau", o.tau, "imbalance ratio in (0, 1]");
    sub->add_option("--method", o.method, "baseline | npt");
    sub->add_option("--seed", o.seed, "seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--workers", o.workers, "parallel runs")->check(CLI::PositiveNumber);
  };
  auto* etf = app.add_subcommand("etf", "build and verify a simplex ETF");
  etf->add_option("--k", o.k, "number of classes")->check(CLI::Range(2, 100000));
  etf->add_option("--d", o.d, "dimension")->check(CLI::PositiveNumber);
  etf->add_option("--seed", o.seed, "rotation seed");
  auto* gc = app.add_subcommand("gradcheck", "compare analytic gradients with central differences");
  auto* tr = app.add_subcommand("train", "train on the base split of one cell");
  auto* b2n = app.add_subcommand("b2n", "run one base-to-novel cell");
  auto* sw = app.add_subcommand("sweep", "run the full grid");
  auto* pl = app.add_subcommand("plot", "re-render figures from runs.csv");
  for (auto* s : {gc, tr, b2n, sw, pl}) common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kArgument;
  }

  try {
    if (*etf) return cmd_etf(o);
    if (*gc) return cmd_gradcheck(o);
    if (*tr) return cmd_train(o);
    if (*b2n) return cmd_b2n(o);
    if (*sw) return cmd_sweep(o);
    if (*pl) return cmd_plot(o);
  } catch (const npt::NumericalAbort& e) {
    std::cerr << "numerical abort at step " << e.step << ": " << e.what() << "\n";
    return kNumerical;
  } catch (const npt::DegenerateGeometryError& e) {
    std::cerr << "degenerate geometry: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kArgument;
  }
  return kArgument;
}
