// slimnam: train, render, benchmark and serve slimmable WaveNet amp models.

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "slimnam/control_server.hpp"
#include "slimnam/inference.hpp"
#include "slimnam/model.hpp"
#include "slimnam/synth.hpp"
#include "slimnam/training.hpp"
#include "slimnam/wav.hpp"

#include "cli_common.hpp"

using namespace slimnam;

namespace
{

std::atomic<bool> g_stop{false};

void on_signal(int)
{
  g_stop = true;
}

std::vector<double> to_double(const AudioBuffer& a)
{
  return {a.samples.begin(), a.samples.end()};
}

void write_text(const std::string& path, const std::string& text)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error("cannot open '" + path + "' for writing");
  out << text;
}

std::pair<AudioBuffer, AudioBuffer> read_pair(const std::string& dry_path, const std::string& wet_path)
{
  auto dry = read_wav(dry_path);
  auto wet = read_wav(wet_path);
  if (dry.samples.size() != wet.samples.size())
    throw ConfigError("dry and wet files differ in length");
  if (dry.sample_rate != wet.sample_rate)
    throw ConfigError("dry and wet files differ in sample rate");
  return {std::move(dry), std::move(wet)};
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Slimmable WaveNet amp models: training, rendering, benchmarking and live serving"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Render an aligned dry/wet pair through the synthetic reference amp");
  std::string synth_dry, synth_wet;
  double synth_seconds = 120.0;
  std::uint64_t synth_seed = 1;
  double synth_rate = 48000.0;
  synth->add_option("--out-dry", synth_dry, "Output dry WAV")->required();
  synth->add_option("--out-wet", synth_wet, "Output wet WAV")->required();
  synth->add_option("--seconds", synth_seconds, "Duration in seconds")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Signal seed")->capture_default_str();
  synth->add_option("--sample-rate", synth_rate, "Sample rate in Hz")->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model on a dry/wet pair");
  std::string train_dry, train_wet, train_out, train_history;
  std::string width_mode = "random";
  std::string dilations = "1,2,4,8,16,32,64,128";
  std::string loss_name = "mse";
  TrainConfig tc;
  WaveNetConfig wc;
  double holdout = cli::kDefaultHoldout;
  tc.epochs = 20;
  train_cmd->add_option("--dry", train_dry, "Dry (input) WAV")->required();
  train_cmd->add_option("--wet", train_wet, "Wet (target) WAV")->required();
  train_cmd->add_option("--out-model", train_out, "Model file to write")->required();
  train_cmd->add_option("--history", train_history, "History CSV (default: <out-model>.history.csv)");
  train_cmd->add_option("--epochs", tc.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--width-mode", width_mode, "random | fixed:N")->capture_default_str();
  train_cmd->add_option("--seed", tc.seed, "Init/shuffle/width seed")->capture_default_str();
  train_cmd->add_option("--channels", wc.channels, "Full width c")->capture_default_str();
  train_cmd->add_option("--kernel-size", wc.kernel_size, "Kernel size k")->capture_default_str();
  train_cmd->add_option("--dilations", dilations, "Comma-separated dilations")->capture_default_str();
  train_cmd->add_option("--batch-size", tc.batch_size, "Segments per minibatch")->capture_default_str();
  train_cmd->add_option("--segment-len", tc.segment_len, "Samples per segment")->capture_default_str();
  train_cmd->add_option("--lr", tc.learning_rate, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--loss", loss_name, "mse | esr")->capture_default_str();
  train_cmd->add_option("--holdout", holdout, "Trailing fraction held out for validation")->capture_default_str();

  // process
  auto* process = app.add_subcommand("process", "Render a WAV through a model offline");
  std::string proc_model, proc_in, proc_out;
  int proc_width = 0;
  process->add_option("--model", proc_model, "Model file")->required();
  process->add_option("--in", proc_in, "Input WAV")->required();
  process->add_option("--out", proc_out, "Output WAV (float32)")->required();
  process->add_option("--width", proc_width, "Active width (default: full)");

  // bench
  auto* bench = app.add_subcommand("bench", "Measure real-time factor per width");
  std::string bench_model, bench_widths;
  double bench_seconds = 5.0;
  std::size_t bench_buffer = 64;
  bench->add_option("--model", bench_model, "Model file")->required();
  bench->add_option("--widths", bench_widths, "1..c range or comma list (default: all)");
  bench->add_option("--seconds", bench_seconds, "Audio seconds per timing run")->capture_default_str();
  bench->add_option("--buffer", bench_buffer, "Block size in samples")->capture_default_str();

  // pareto
  auto* pareto = app.add_subcommand("pareto", "ESR / compute sweep over every width on held-out data");
  std::string par_model, par_dry, par_wet, par_out;
  double par_holdout = cli::kDefaultHoldout;
  double par_seconds = 2.0;
  std::size_t par_buffer = 64;
  std::size_t par_segment = tc.segment_len;
  pareto->add_option("--model", par_model, "Model file")->required();
  pareto->add_option("--dry", par_dry, "Dry WAV")->required();
  pareto->add_option("--wet", par_wet, "Wet WAV")->required();
  pareto->add_option("--out-csv", par_out, "CSV to write (default: stdout)");
  pareto->add_option("--holdout", par_holdout, "Trailing fraction evaluated (must match training)")
    ->capture_default_str();
  pareto->add_option("--segment-len", par_segment, "Segment length used at training time")->capture_default_str();
  pareto->add_option("--bench-seconds", par_seconds, "Audio seconds per rtf timing run")->capture_default_str();
  pareto->add_option("--buffer", par_buffer, "Block size for rtf timing")->capture_default_str();

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Live demo: loop a WAV through the model with a width control");
  std::string serve_model, serve_loop;
  ServerOptions so;
  serve_cmd->add_option("--model", serve_model, "Model file")->required();
  serve_cmd->add_option("--loop-wav", serve_loop, "Dry WAV to loop")->required();
  serve_cmd->add_option("--port", so.port, "TCP port (0 = any free port)")->capture_default_str();
  serve_cmd->add_option("--address", so.address, "Listen address")->capture_default_str();
  serve_cmd->add_option("--buffer", so.buffer_size, "Block size in samples")->capture_default_str();
  serve_cmd->add_option("--ui-dir", so.ui_dir, "Directory of static UI files served at /");

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError& e)
  {
    return app.exit(e);
  }

  try
  {
    if (*synth)
    {
      const auto dry = render_dry(synth_seconds, synth_rate, synth_seed);
      const auto wet = apply_amp(default_amp_spec(), dry);
      write_wav(synth_dry, dry, WavFormat::float32);
      write_wav(synth_wet, wet, WavFormat::float32);
      std::cout << "wrote " << dry.samples.size() << " samples to " << synth_dry << " and " << synth_wet << "\n";
    }
    else if (*train_cmd)
    {
      wc.dilations = cli::parse_int_list(dilations, "--dilations");
      tc.width_mode = cli::parse_width_mode(width_mode);
      tc.loss = cli::parse_loss(loss_name);
      const auto [dry, wet] = read_pair(train_dry, train_wet);
      wc.sample_rate = dry.sample_rate;
      validate(wc);
      if (!tc.width_mode.random)
        std::cout << "# baseline mode: fixed width " << tc.width_mode.fixed_width << " (no slimmable training)\n";
      const auto data = split_holdout(to_double(dry), to_double(wet), dry.sample_rate, holdout, tc.segment_len,
                                      receptive_field(wc));
      const auto result = train(new_model(wc, tc.seed), data, tc, [](const EpochRecord& r) {
        std::cout << "epoch " << r.epoch << " loss " << r.mean_train_loss << " full-width esr " << r.full_width_esr
                  << std::endl;
      });
      save_model(result.model, train_out);
      write_text(train_history.empty() ? train_out + ".history.csv" : train_history, history_csv(result.history));
      const double esr = evaluate_esr(result.model, data.validation, ActiveWidth(wc.channels));
      std::printf("final full-width esr %.17g\n", esr);
    }
    else if (*process)
    {
      const auto model = load_model(proc_model);
      const ActiveWidth width(proc_width == 0 ? model.config.channels : proc_width);
      auto in = read_wav(proc_in);
      AudioBuffer out;
      out.sample_rate = in.sample_rate;
      out.samples = forward_batch<float>(model, width, in.samples);
      write_wav(proc_out, out, WavFormat::float32);
    }
    else if (*bench)
    {
      const auto model = load_model(bench_model);
      const auto widths = bench_widths.empty() ? cli::parse_widths("1.." + std::to_string(model.config.channels))
                                               : cli::parse_widths(bench_widths);
      std::cout << "width,flops_per_sample,rtf\n";
      for (int w : widths)
      {
        const double rtf = cli::median_rtf(model, ActiveWidth(w), bench_seconds, bench_buffer);
        std::cout << w << ',' << flops_per_sample(model.config, ActiveWidth(w)) << ',' << rtf << "\n";
      }
    }
    else if (*pareto)
    {
      const auto model = load_model(par_model);
      const auto [dry, wet] = read_pair(par_dry, par_wet);
      const auto data = split_holdout(to_double(dry), to_double(wet), dry.sample_rate, par_holdout, par_segment,
                                      receptive_field(model.config));
      const auto csv = cli::pareto_csv(model, data.validation, par_seconds, par_buffer);
      if (par_out.empty())
        std::cout << csv;
      else
        write_text(par_out, csv);
    }
    else if (*serve_cmd)
    {
      const auto model = load_model(serve_model);
      auto loop = read_wav(serve_loop);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      serve(model, std::move(loop), so, g_stop);
    }
  }
  catch (const std::exception& e)
  {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
