/*
 * Copyright 2026 the koopman-lens authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "klens/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kInvalidConfig = 2, kNumericalFailure = 3, kInfeasible = 4 };

int run(const std::string& command, const std::string& config_path,
        long long seed_override, const std::string& out_override) {
  klens::RunConfig cfg = klens::RunConfig::load(config_path);
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  if (!out_override.empty()) cfg.out_dir = out_override;

  if (command == "fit-surrogate") return klens::cmd_fit_surrogate(cfg);
  if (command == "bound-report") return klens::cmd_bound_report(cfg);
  if (command == "dg-apply") return klens::cmd_dg_apply(cfg);
  if (command == "shift-audit") return klens::cmd_shift_audit(cfg);
  throw klens::InvalidInput("unknown command " + command);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopman surrogate analysis and domain-shift rejection for LSTMs"};
  app.require_subcommand(1);

  std::string config_path;
  long long seed_override = -1;
  std::string out_override;

  const char* names[] = {"fit-surrogate", "bound-report", "dg-apply", "shift-audit"};
  const char* descs[] = {
      "Identify per-layer linear models and assemble the network surrogate",
      "Bound-vs-empirical sweep over shift strengths and kinds",
      "Synthesize the rejection gain and run paired baseline/DG trials",
      "Classify generated shifts as covariate or concept drift"};
  for (int k = 0; k < 4; ++k) {
    CLI::App* sub = app.add_subcommand(names[k], descs[k]);
    sub->add_option("--config", config_path, "Path to the JSON run config")->required();
    sub->add_option("--seed", seed_override, "Override the config seed");
    sub->add_option("--out", out_override, "Override the output directory");
  }

  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, config_path, seed_override, out_override);
  } catch (const klens::SynthesisInfeasible& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInfeasible;
  } catch (const klens::NumericalFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const klens::UnstableSystem& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const klens::CertificateRejected& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const klens::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalidConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
