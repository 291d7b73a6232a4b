// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

// rqsep command-line tool. Every subcommand accepts config overrides as
// trailing `--section.key value` pairs (a bare key works when unique).

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "rqsep/config.hpp"
#include "rqsep/data.hpp"
#include "rqsep/error.hpp"
#include "rqsep/separate.hpp"
#include "rqsep/train.hpp"

namespace fs = std::filesystem;
using namespace rqsep;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required) {
  cmd->add_option("--config", c.config_path, "INI config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Random seed (sets train.seed)");
  auto* out = cmd->add_option("--out", c.out, "Output path");
  if (out_required) out->required();
  cmd->allow_extras();
}

train::Config resolve_config(const Common& c, const std::vector<std::string>& extras) {
  train::Config config = c.config_path.empty() ? train::Config{} : train::load_config(c.config_path);
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0 || arg.size() < 3) {
      fail(ErrorKind::kConfig, "unexpected argument '" + arg + "'; overrides take the form --section.key value");
    }
    std::string key = arg.substr(2);
    std::string value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= extras.size()) fail(ErrorKind::kConfig, "override " + arg + " needs a value");
      value = extras[++i];
    }
    train::set_field(config, key, value);
  }
  if (c.seed) config.train.seed = *c.seed;
  config.validate();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Music source separation with a residual-quantized codec"};
  app.require_subcommand(1);

  Common common;

  auto* toy = app.add_subcommand("make-toy-data", "Write the synthetic four-stem dataset");
  data::ToyDatasetOptions toy_options;
  add_common(toy, common, true);
  toy->add_option("--tracks", toy_options.n_tracks, "Number of tracks")->capture_default_str();
  toy->add_option("--seconds", toy_options.seconds, "Track length in seconds")->capture_default_str();

  std::string manifest, codec_ckpt, lm_ckpt, input, resume;
  double seconds = 4.0;

  auto* train_codec = app.add_subcommand("train-codec", "Train the separation codec");
  add_common(train_codec, common, true);
  train_codec->add_option("--data", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  train_codec->add_option("--resume", resume, "Checkpoint to resume from")->check(CLI::ExistingFile);

  auto* train_lm = app.add_subcommand("train-lm", "Fit the prior over code grids of a frozen codec");
  add_common(train_lm, common, true);
  train_lm->add_option("--codec", codec_ckpt, "Codec checkpoint")->required()->check(CLI::ExistingFile);
  train_lm->add_option("--data", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);

  auto* separate = app.add_subcommand("separate", "Split a mixture WAV into stem WAVs");
  add_common(separate, common, true);
  separate->add_option("--codec", codec_ckpt, "Codec checkpoint")->required()->check(CLI::ExistingFile);
  separate->add_option("--input", input, "Mixture WAV")->required()->check(CLI::ExistingFile);

  auto* evaluate = app.add_subcommand("evaluate", "Score the test split and write reports");
  add_common(evaluate, common, true);
  evaluate->add_option("--codec", codec_ckpt, "Codec checkpoint")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--data", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);

  auto* generate = app.add_subcommand("generate", "Sample a track from the prior");
  add_common(generate, common, true);
  generate->add_option("--lm", lm_ckpt, "Prior checkpoint")->required()->check(CLI::ExistingFile);
  generate->add_option("--codec", codec_ckpt, "Codec checkpoint")->required()->check(CLI::ExistingFile);
  generate->add_option("--seconds", seconds, "Length in seconds")->capture_default_str();

  auto* encode = app.add_subcommand("encode", "Encode a mixture WAV to a code grid file");
  add_common(encode, common, true);
  encode->add_option("--codec", codec_ckpt, "Codec checkpoint")->required()->check(CLI::ExistingFile);
  encode->add_option("--input", input, "Mixture WAV")->required()->check(CLI::ExistingFile);

  auto* decode = app.add_subcommand("decode", "Render a code grid file to stem WAVs");
  add_common(decode, common, true);
  decode->add_option("--codec", codec_ckpt, "Codec checkpoint")->required()->check(CLI::ExistingFile);
  decode->add_option("--input", input, "Code grid file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error=UsageError: " << e.what() << "\n";
    return 2;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    const train::Config config = resolve_config(common, cmd->remaining());
    const fs::path out = common.out;

    if (cmd == toy) {
      if (common.seed) toy_options.seed = *common.seed;
      toy_options.sample_rate = config.codec.sample_rate;
      const data::DatasetSplit split = data::make_toy_dataset(toy_options, out);
      std::cout << "manifest=" << (out / "manifest.txt").string() << " train=" << split.train.size()
                << " validation=" << split.validation.size() << " test=" << split.test.size() << "\n";
    } else if (cmd == train_codec) {
      std::optional<fs::path> from;
      if (!resume.empty()) from = resume;
      const fs::path ckpt = train::train_codec(config, manifest, out, std::cout, from);
      std::cout << "checkpoint=" << ckpt.string() << "\n";
    } else if (cmd == train_lm) {
      const fs::path ckpt = train::train_lm(config, codec_ckpt, manifest, out, std::cout);
      std::cout << "checkpoint=" << ckpt.string() << "\n";
    } else if (cmd == separate) {
      for (const auto& p : train::separate_file(codec_ckpt, input, out)) std::cout << "wrote=" << p.string() << "\n";
    } else if (cmd == evaluate) {
      const bool has_overrides = !common.config_path.empty() || !cmd->remaining().empty();
      const metrics::EvalReport report = train::evaluate_file(codec_ckpt, manifest, out, has_overrides ? &config.eval : nullptr);
      std::cout << metrics::render_table(report) << metrics::render_key_values(report);
    } else if (cmd == generate) {
      const CodeGrid grid = train::generate_file(lm_ckpt, codec_ckpt, seconds, config.train.seed, out);
      std::cout << "positions=" << grid.positions << " depth=" << grid.depth << " wrote=" << out << "\n";
    } else if (cmd == encode) {
      const CodeGrid grid = train::encode_file(codec_ckpt, input, out);
      std::cout << "positions=" << grid.positions << " depth=" << grid.depth << " wrote=" << out << "\n";
    } else if (cmd == decode) {
      train::decode_file(codec_ckpt, input, out);
      std::cout << "wrote=" << out << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error=" << error_kind_name(e.kind()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error=IoError: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error=InternalError: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
