#include <CLI11.hpp>
#include <iostream>

#include "factorgan/cli/commands.hpp"
#include "factorgan/core/common.hpp"

int main(int argc, char** argv) {
  CLI::App app{"factorized-latent controllable GAN on the ShapeWorld domain"};
  app.require_subcommand(1);

  std::string config, data, out, resume, ckpt, encoders, pca, img, result,
      attr, values;
  std::vector<std::string> sets;
  std::uint64_t seed = 1;
  double psi = 0.7;
  int seeds = 4, samples = 2000;
  bool predictor_units = false, force = false;

  auto* c_make = app.add_subcommand("make-data", "render a dataset");
  c_make->add_option("--config", config)->required();
  c_make->add_option("--out", out)->required();

  auto* c_cal = app.add_subcommand("calibrate", "fit tau thresholds");
  c_cal->add_option("--config", config)->required();
  c_cal->add_option("--data", data)->required();
  c_cal->add_option("--out", out)->required();
  c_cal->add_option("--samples", samples);

  auto* c_train = app.add_subcommand("train", "phase-1 training");
  c_train->add_option("--config", config)->required();
  c_train->add_option("--data", data)->required();
  c_train->add_option("--out", out)->required();
  c_train->add_option("--resume", resume);

  auto* c_enc = app.add_subcommand("train-encoders",
                                   "phase-2 control encoders + PCA");
  c_enc->add_option("--ckpt", ckpt)->required();
  c_enc->add_option("--out", out)->required();
  c_enc->add_option("--config", config);

  auto* c_gen = app.add_subcommand("generate", "controlled synthesis");
  c_gen->add_option("--ckpt", ckpt)->required();
  c_gen->add_option("--encoders", encoders);
  c_gen->add_option("--set", sets, "attr=value (repeatable)");
  c_gen->add_option("--seed", seed);
  c_gen->add_option("--out", out)->required();
  auto* psi_opt = c_gen->add_option("--psi", psi, "truncation");
  c_gen->add_flag("--predictor-units", predictor_units);
  c_gen->add_flag("--force", force);

  auto* c_proj = app.add_subcommand("project", "invert a real image");
  c_proj->add_option("--ckpt", ckpt)->required();
  c_proj->add_option("--pca", pca)->required();
  c_proj->add_option("--img", img)->required();
  c_proj->add_option("--out", out)->required();
  c_proj->add_option("--config", config);
  c_proj->add_flag("--force", force);

  auto* c_edit = app.add_subcommand("edit", "edit a projected image");
  c_edit->add_option("--result", result)->required();
  c_edit->add_option("--ckpt", ckpt)->required();
  c_edit->add_option("--encoders", encoders)->required();
  c_edit->add_option("--set", sets)->required();
  c_edit->add_option("--out", out)->required();
  c_edit->add_flag("--predictor-units", predictor_units);
  c_edit->add_flag("--force", force);

  auto* c_eval = app.add_subcommand("evaluate", "run the metric suite");
  c_eval->add_option("--ckpt", ckpt)->required();
  c_eval->add_option("--encoders", encoders)->required();
  c_eval->add_option("--data", data)->required();
  c_eval->add_option("--out", out)->required();
  c_eval->add_option("--config", config);
  c_eval->add_flag("--force", force);

  auto* c_grid = app.add_subcommand("grid", "attribute sweep montage");
  c_grid->add_option("--ckpt", ckpt)->required();
  c_grid->add_option("--encoders", encoders)->required();
  c_grid->add_option("--attr", attr)->required();
  c_grid->add_option("--values", values)->required();
  c_grid->add_option("--seeds", seeds);
  c_grid->add_option("--out", out)->required();
  c_grid->add_flag("--predictor-units", predictor_units);
  c_grid->add_flag("--force", force);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (c_make->parsed()) fgan::cli::cmd_make_data(config, out);
    if (c_cal->parsed()) fgan::cli::cmd_calibrate(config, data, out, samples);
    if (c_train->parsed()) fgan::cli::cmd_train(config, data, out, resume);
    if (c_enc->parsed()) fgan::cli::cmd_train_encoders(ckpt, out, config);
    if (c_gen->parsed())
      fgan::cli::cmd_generate(ckpt, encoders, sets, seed, out, psi,
                              psi_opt->count() > 0, predictor_units, force);
    if (c_proj->parsed())
      fgan::cli::cmd_project(ckpt, pca, img, out, config, force);
    if (c_edit->parsed())
      fgan::cli::cmd_edit(result, ckpt, encoders, sets, out, predictor_units,
                          force);
    if (c_eval->parsed())
      fgan::cli::cmd_evaluate(ckpt, encoders, data, out, config, force);
    if (c_grid->parsed())
      fgan::cli::cmd_grid(ckpt, encoders, attr, values, seeds, out,
                          predictor_units, force);
  } catch (const fgan::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
