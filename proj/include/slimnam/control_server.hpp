#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slimnam/model.hpp"
#include "slimnam/wav.hpp"

namespace slimnam
{

/// Trailing-window accounting behind the live rtf/esr readout.
///
/// Entries live in a fixed ring sized at construction; update() does not allocate.
class TelemetryWindow
{
public:
  explicit TelemetryWindow(double window_seconds = 1.0, std::size_t capacity = 4096);

  /// Records one processed block finishing at wall time `now_seconds`.
  void update(std::span<const float> output, std::span<const float> reference, double sample_rate,
              double processing_seconds, double now_seconds);

  /// Audio seconds per processing second over the window; empty before the first block.
  std::optional<double> rtf() const;
  /// Error energy over reference energy in the window; empty if the reference is silent.
  std::optional<double> esr() const;

  std::size_t size() const { return count_; }

private:
  struct Entry
  {
    double end_time;
    double audio_seconds;
    double busy_seconds;
    double error_energy;
    double reference_energy;
  };
  void evict(double now_seconds);
  void pop_oldest();

  double window_seconds_;
  std::vector<Entry> ring_;
  std::size_t head_ = 0;
  std::size_t count_ = 0;
  double audio_ = 0.0;
  double busy_ = 0.0;
  double error_ = 0.0;
  double reference_ = 0.0;
};

/// Server-to-client telemetry frame. rtf/esr are omitted when not yet defined.
/// `channels` (the model's full width) lets a client size its width control.
std::string telemetry_json(int width, int channels, std::optional<double> rtf, std::optional<double> esr,
                           std::size_t buffer_size, double sample_rate);
std::string error_json(const std::string& message);

struct ServerOptions
{
  std::string address = "127.0.0.1";
  unsigned short port = 8080; // 0 picks a free port
  std::size_t buffer_size = 256;
  std::filesystem::path ui_dir; // static files served at "/"
  std::size_t max_queued_frames = 64; // per client; oldest dropped beyond this
  double telemetry_hz = 10.0;
};

struct ServerStats
{
  std::uint64_t blocks = 0;
  double max_lateness_seconds = 0.0;
  int applied_width = 0;
  std::uint64_t dropped_frames = 0;
};

/// Loops a dry signal through one StreamEngine at real-time pace and broadcasts
/// audio and telemetry over the WebSocket endpoint /ws.
class ControlServer
{
public:
  ControlServer(const Model& model, AudioBuffer loop, ServerOptions options);
  ~ControlServer();
  ControlServer(const ControlServer&) = delete;
  ControlServer& operator=(const ControlServer&) = delete;

  /// Binds and starts the network and audio threads. Throws Error on bind failure.
  void start();
  void stop();

  unsigned short port() const;
  ServerStats stats() const;

  /// Full-width reference the live ESR compares against (warm history, one loop long).
  const std::vector<float>& reference() const;

  struct Impl;

private:
  std::unique_ptr<Impl> impl_;
};

/// Runs a ControlServer until `stop_requested` becomes true.
void serve(const Model& model, AudioBuffer loop, const ServerOptions& options, const std::atomic<bool>& stop_requested);

} // namespace slimnam
