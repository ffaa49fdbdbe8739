// Copyright Contributors to the apfield Project
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "apf/commands.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  apf::CliOverrides overrides;
};

void add_common_flags(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file");
  cmd->add_option("--seed", args.overrides.seed, "override the run seed");
  cmd->add_option("--threads", args.overrides.threads,
                  "worker threads (default 1 for determinism)");
  cmd->add_option("--cell-size", args.overrides.cell_size, "transform field cell size");
  cmd->add_option("--encoding", args.overrides.encoding,
                  "feature encoding: xyz|uv|depth|uv_depth|color");
  cmd->add_option("--iters", args.overrides.iters, "training iterations");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"apfield: per-view appearance transform fields over rendered images"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, ablate_args;
  std::string gen_out, train_dataset, train_out, train_resume;
  std::string eval_checkpoint, eval_dataset, eval_out;
  std::string ablate_dataset, ablate_out;
  bool no_appearance = false;

  CLI::App* gen = app.add_subcommand("generate", "render a synthetic multi-view dataset");
  add_common_flags(gen, gen_args);
  gen->add_option("--out", gen_out, "output dataset directory")->required();

  CLI::App* tr = app.add_subcommand("train", "optimize an appearance model on a dataset");
  add_common_flags(tr, train_args);
  tr->add_option("--dataset", train_dataset, "dataset directory")->required();
  tr->add_option("--out", train_out, "output directory")->required();
  tr->add_option("--resume", train_resume, "checkpoint to continue from");

  CLI::App* ev = app.add_subcommand("eval", "left/right-protocol metrics on test views");
  add_common_flags(ev, eval_args);
  ev->add_option("--checkpoint", eval_checkpoint, "trained checkpoint");
  ev->add_option("--dataset", eval_dataset, "dataset directory")->required();
  ev->add_option("--out", eval_out, "output directory")->required();
  ev->add_flag("--no-appearance", no_appearance,
               "discard the appearance module and report raw-render metrics");

  CLI::App* ab = app.add_subcommand("ablate", "encoding and cell-size sweep");
  add_common_flags(ab, ablate_args);
  ab->add_option("--dataset", ablate_dataset, "dataset directory")->required();
  ab->add_option("--out", ablate_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const apf::RunConfig cfg = apf::load_run_config(gen_args.config_path, gen_args.overrides);
      return apf::cmd_generate(cfg, gen_out);
    }
    if (tr->parsed()) {
      const apf::RunConfig cfg =
          apf::load_run_config(train_args.config_path, train_args.overrides);
      return apf::cmd_train(cfg, train_dataset, train_out, train_resume);
    }
    if (ev->parsed()) {
      const apf::RunConfig cfg = apf::load_run_config(eval_args.config_path, eval_args.overrides);
      if (!no_appearance && eval_checkpoint.empty())
        throw std::runtime_error("eval: --checkpoint is required unless --no-appearance");
      return apf::cmd_eval(cfg, eval_checkpoint, eval_dataset, eval_out, no_appearance);
    }
    if (ab->parsed()) {
      const apf::RunConfig cfg =
          apf::load_run_config(ablate_args.config_path, ablate_args.overrides);
      return apf::cmd_ablate(cfg, ablate_dataset, ablate_out);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
