#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fgan::cli {

// Subcommand bodies; each throws ValidationError for usage/config problems
// (exit 2) and Error/IoError for runtime failures (exit 1).

void cmd_make_data(const std::string& config, const std::string& out);

void cmd_calibrate(const std::string& config, const std::string& data,
                   const std::string& out, int samples);

void cmd_train(const std::string& config, const std::string& data,
               const std::string& out, const std::string& resume);

void cmd_train_encoders(const std::string& ckpt, const std::string& out,
                        const std::string& config_override);

void cmd_generate(const std::string& ckpt, const std::string& encoders,
                  const std::vector<std::string>& sets, std::uint64_t seed,
                  const std::string& out, double psi, bool psi_given,
                  bool predictor_units, bool force);

void cmd_project(const std::string& ckpt, const std::string& pca,
                 const std::string& img, const std::string& out,
                 const std::string& config_override, bool force);

void cmd_edit(const std::string& result, const std::string& ckpt,
              const std::string& encoders,
              const std::vector<std::string>& sets, const std::string& out,
              bool predictor_units, bool force);

void cmd_evaluate(const std::string& ckpt, const std::string& encoders,
                  const std::string& data, const std::string& out,
                  const std::string& config_override, bool force);

void cmd_grid(const std::string& ckpt, const std::string& encoders,
              const std::string& attr, const std::string& values, int seeds,
              const std::string& out, bool predictor_units, bool force);

}  // namespace fgan::cli
