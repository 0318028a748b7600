#include "slimnam/control_server.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <future>
#include <iostream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "json.hpp"

#include "slimnam/inference.hpp"

namespace slimnam
{

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

TelemetryWindow::TelemetryWindow(double window_seconds, std::size_t capacity)
: window_seconds_(window_seconds)
, ring_(std::max<std::size_t>(capacity, 1))
{
}

void TelemetryWindow::evict(double now_seconds)
{
  while (count_ > 0)
  {
    const Entry& oldest = ring_[head_];
    if (oldest.end_time > now_seconds - window_seconds_ && count_ < ring_.size())
      break;
    pop_oldest();
  }
}

void TelemetryWindow::pop_oldest()
{
  {
    const Entry& oldest = ring_[head_];
    audio_ -= oldest.audio_seconds;
    busy_ -= oldest.busy_seconds;
    error_ -= oldest.error_energy;
    reference_ -= oldest.reference_energy;
    head_ = (head_ + 1) % ring_.size();
    --count_;
  }
  if (count_ == 0)
    audio_ = busy_ = error_ = reference_ = 0.0;
}

void TelemetryWindow::update(std::span<const float> output, std::span<const float> reference, double sample_rate,
                             double processing_seconds, double now_seconds)
{
  Entry e{now_seconds, static_cast<double>(output.size()) / sample_rate, processing_seconds, 0.0, 0.0};
  const std::size_t n = std::min(output.size(), reference.size());
  for (std::size_t i = 0; i < n; ++i)
  {
    const double d = static_cast<double>(reference[i]) - static_cast<double>(output[i]);
    e.error_energy += d * d;
    e.reference_energy += static_cast<double>(reference[i]) * reference[i];
  }
  evict(now_seconds);
  ring_[(head_ + count_) % ring_.size()] = e;
  ++count_;
  audio_ += e.audio_seconds;
  busy_ += e.busy_seconds;
  error_ += e.error_energy;
  reference_ += e.reference_energy;
}

std::optional<double> TelemetryWindow::rtf() const
{
  if (count_ == 0 || !(busy_ > 0.0))
    return std::nullopt;
  return audio_ / busy_;
}

std::optional<double> TelemetryWindow::esr() const
{
  if (count_ == 0 || !(reference_ > 0.0))
    return std::nullopt;
  return std::max(0.0, error_) / reference_;
}

std::string telemetry_json(int width, int channels, std::optional<double> rtf, std::optional<double> esr,
                           std::size_t buffer_size, double sample_rate)
{
  nlohmann::json j = {{"type", "telemetry"},
                      {"width", width},
                      {"channels", channels},
                      {"buffer_size", buffer_size},
                      {"sample_rate", sample_rate}};
  if (rtf && std::isfinite(*rtf))
    j["rtf"] = *rtf;
  if (esr && std::isfinite(*esr))
    j["esr"] = *esr;
  return j.dump();
}

std::string error_json(const std::string& message)
{
  return nlohmann::json{{"type", "error"}, {"message", message}}.dump();
}

namespace
{

struct Outgoing
{
  bool binary = false;
  std::string data;
};

std::string mime_type(const std::filesystem::path& p)
{
  const auto ext = p.extension().string();
  if (ext == ".html" || ext == ".htm")
    return "text/html";
  if (ext == ".js" || ext == ".mjs")
    return "application/javascript";
  if (ext == ".css")
    return "text/css";
  if (ext == ".json")
    return "application/json";
  if (ext == ".svg")
    return "image/svg+xml";
  if (ext == ".png")
    return "image/png";
  if (ext == ".wasm")
    return "application/wasm";
  return "application/octet-stream";
}

} // namespace

class WsSession;

struct ControlServer::Impl
{
  ServerOptions options;
  WaveNetConfig config;
  AudioBuffer loop;
  std::vector<float> reference;
  StreamEngine engine;

  asio::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  std::vector<std::weak_ptr<WsSession>> sessions; // io thread only
  std::string last_telemetry; // io thread only

  std::thread io_thread;
  std::thread audio_thread;
  std::atomic<bool> running{false};
  std::atomic<int> applied_width{0};
  std::atomic<std::uint64_t> blocks{0};
  std::atomic<std::uint64_t> dropped{0};
  std::atomic<double> max_lateness{0.0};

  Impl(const Model& model, AudioBuffer l, ServerOptions o)
  : options(std::move(o))
  , config(model.config)
  , loop(std::move(l))
  , engine(model, ActiveWidth(model.config.channels), options.buffer_size)
  {
    applied_width = model.config.channels;
    render_reference(model);
  }

  void render_reference(const Model& model)
  {
    // Two passes through a full-width engine; the second starts with the
    // history a wrapped loop would have.
    StreamEngine ref(model, ActiveWidth(model.config.channels), options.buffer_size);
    const std::size_t n = loop.samples.size();
    reference.assign(n, 0.0f);
    std::vector<float> in(options.buffer_size);
    std::vector<float> out(options.buffer_size);
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t pos = 0; pos < n; pos += options.buffer_size)
      {
        const std::size_t len = std::min(options.buffer_size, n - pos);
        std::copy_n(loop.samples.begin() + static_cast<std::ptrdiff_t>(pos), len, in.begin());
        ref.process(std::span<const float>(in.data(), len), std::span<float>(out.data(), len));
        if (pass == 1)
          std::copy_n(out.begin(), len, reference.begin() + static_cast<std::ptrdiff_t>(pos));
      }
  }

  void broadcast(std::shared_ptr<const Outgoing> frame);
  void accept();
  void audio_loop();
  void handle_text(WsSession& session, const std::string& text);
};

class WsSession : public std::enable_shared_from_this<WsSession>
{
public:
  WsSession(tcp::socket socket, ControlServer::Impl& server)
  : ws_(std::move(socket))
  , server_(server)
  {
  }

  void run(http::request<http::string_body> req)
  {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
  }

  void send(std::shared_ptr<const Outgoing> frame)
  {
    if (closed_)
      return;
    if (queue_.size() >= server_.options.max_queued_frames)
    {
      // The front entry may be mid-write; drop the oldest one behind it.
      const auto victim = writing_ && queue_.size() > 1 ? queue_.begin() + 1 : queue_.begin();
      if (!(writing_ && queue_.size() == 1))
      {
        queue_.erase(victim);
        ++server_.dropped;
      }
    }
    queue_.push_back(std::move(frame));
    if (!writing_)
      do_write();
  }

  void send_text(std::string text)
  {
    auto frame = std::make_shared<Outgoing>();
    frame->data = std::move(text);
    send(std::move(frame));
  }

  bool closed() const { return closed_; }

  void shutdown()
  {
    closed_ = true;
    beast::error_code ignored;
    beast::get_lowest_layer(ws_).socket().shutdown(tcp::socket::shutdown_both, ignored);
    beast::get_lowest_layer(ws_).socket().close(ignored);
  }

private:
  void on_accept(beast::error_code ec)
  {
    if (ec)
    {
      closed_ = true;
      return;
    }
    server_.sessions.push_back(weak_from_this());
    std::string hello = server_.last_telemetry;
    if (hello.empty())
      hello = telemetry_json(server_.applied_width.load(), server_.config.channels, std::nullopt, std::nullopt,
                             server_.options.buffer_size, server_.config.sample_rate);
    send_text(std::move(hello));
    do_read();
  }

  void do_read()
  {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec)
  {
    if (ec)
    {
      closed_ = true;
      return;
    }
    if (ws_.got_text())
      server_.handle_text(*this, beast::buffers_to_string(buffer_.data()));
    else
      send_text(error_json("binary frames are not accepted"));
    buffer_.consume(buffer_.size());
    do_read();
  }

  void do_write()
  {
    writing_ = true;
    const auto& front = queue_.front();
    ws_.binary(front->binary);
    ws_.async_write(asio::buffer(front->data),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_write(ec); });
  }

  void on_write(beast::error_code ec)
  {
    queue_.pop_front();
    if (ec)
    {
      closed_ = true;
      writing_ = false;
      queue_.clear();
      return;
    }
    if (!queue_.empty())
      do_write();
    else
      writing_ = false;
  }

  websocket::stream<beast::tcp_stream> ws_;
  ControlServer::Impl& server_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const Outgoing>> queue_;
  bool writing_ = false;
  bool closed_ = false;
};

namespace
{

class HttpSession : public std::enable_shared_from_this<HttpSession>
{
public:
  HttpSession(tcp::socket socket, ControlServer::Impl& server)
  : stream_(std::move(socket))
  , server_(server)
  {
  }

  void run()
  {
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

private:
  void on_read(beast::error_code ec)
  {
    if (ec)
      return;
    if (websocket::is_upgrade(req_))
    {
      if (req_.target() == "/ws")
      {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), server_)->run(std::move(req_));
        return;
      }
      respond(http::status::not_found, "text/plain", "websocket endpoint is /ws\n");
      return;
    }
    if (req_.method() != http::verb::get && req_.method() != http::verb::head)
    {
      respond(http::status::method_not_allowed, "text/plain", "GET only\n");
      return;
    }
    std::string target(req_.target());
    if (const auto q = target.find('?'); q != std::string::npos)
      target.resize(q);
    if (target.empty() || target.back() == '/')
      target += "index.html";
    if (target.find("..") != std::string::npos || server_.options.ui_dir.empty())
    {
      respond(http::status::not_found, "text/plain", "not found\n");
      return;
    }
    const auto path = server_.options.ui_dir / std::filesystem::path(target).relative_path();
    std::ifstream in(path, std::ios::binary);
    if (!in)
    {
      respond(http::status::not_found, "text/plain", "not found\n");
      return;
    }
    std::ostringstream body;
    body << in.rdbuf();
    respond(http::status::ok, mime_type(path), body.str());
  }

  void respond(http::status status, const std::string& type, std::string body)
  {
    auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
    res->set(http::field::content_type, type);
    res->keep_alive(false);
    res->body() = std::move(body);
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
      beast::error_code ignored;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
    });
  }

  beast::tcp_stream stream_;
  ControlServer::Impl& server_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

} // namespace

void ControlServer::Impl::broadcast(std::shared_ptr<const Outgoing> frame)
{
  asio::post(ioc, [this, frame = std::move(frame)] {
    if (!frame->binary)
      last_telemetry = frame->data;
    std::erase_if(sessions, [](const std::weak_ptr<WsSession>& w) {
      auto s = w.lock();
      return !s || s->closed();
    });
    for (const auto& w : sessions)
      if (auto s = w.lock())
        s->send(frame);
  });
}

void ControlServer::Impl::handle_text(WsSession& session, const std::string& text)
{
  nlohmann::json msg = nlohmann::json::parse(text, nullptr, false);
  if (msg.is_discarded() || !msg.is_object())
  {
    session.send_text(error_json("malformed message: expected one JSON object"));
    return;
  }
  if (!msg.contains("type") || !msg["type"].is_string())
  {
    session.send_text(error_json("message has no string 'type'"));
    return;
  }
  const auto type = msg["type"].get<std::string>();
  if (type != "set_width")
  {
    session.send_text(error_json("unknown message type '" + type + "'"));
    return;
  }
  if (!msg.contains("width") || !msg["width"].is_number_integer())
  {
    session.send_text(error_json("set_width needs an integer 'width'"));
    return;
  }
  const auto width = msg["width"].get<long long>();
  if (width < 1 || width > config.channels)
  {
    session.send_text(error_json("width " + std::to_string(width) + " outside [1, " + std::to_string(config.channels)
                                 + "]"));
    return;
  }
  engine.set_active_width(ActiveWidth(static_cast<int>(width)));
}

void ControlServer::Impl::accept()
{
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec)
    {
      if (ec == asio::error::operation_aborted || !acceptor.is_open())
        return;
    }
    else
    {
      std::make_shared<HttpSession>(std::move(socket), *this)->run();
    }
    accept();
  });
}

void ControlServer::Impl::audio_loop()
{
  using clock = std::chrono::steady_clock;
  const std::size_t n = options.buffer_size;
  const double sr = config.sample_rate;
  const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(n / sr));
  const auto telemetry_period =
    std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / options.telemetry_hz));

  TelemetryWindow window(1.0, static_cast<std::size_t>(sr / static_cast<double>(n)) * 2 + 16);
  std::vector<float> in(n);
  std::vector<float> out(n);
  std::vector<float> ref(n);
  const std::size_t loop_len = loop.samples.size();
  std::size_t pos = 0;

  const auto origin = clock::now();
  auto deadline = origin;
  auto next_telemetry = origin + telemetry_period;
  while (running.load(std::memory_order_acquire))
  {
    for (std::size_t i = 0; i < n; ++i)
    {
      in[i] = loop.samples[pos];
      ref[i] = reference[pos];
      pos = (pos + 1) % loop_len;
    }
    const auto t0 = clock::now();
    engine.process(in, out);
    const auto t1 = clock::now();
    applied_width.store(engine.active_width().value, std::memory_order_release);
    window.update(out, ref, sr, std::chrono::duration<double>(t1 - t0).count(),
                  std::chrono::duration<double>(t1 - origin).count());
    ++blocks;

    auto frame = std::make_shared<Outgoing>();
    frame->binary = true;
    frame->data.resize(n * sizeof(float));
    std::memcpy(frame->data.data(), out.data(), n * sizeof(float)); // host order is little-endian on supported targets
    broadcast(std::move(frame));

    if (t1 >= next_telemetry)
    {
      auto tele = std::make_shared<Outgoing>();
      tele->data = telemetry_json(engine.active_width().value, config.channels, window.rtf(), window.esr(), n, sr);
      broadcast(std::move(tele));
      next_telemetry += telemetry_period;
      if (t1 - next_telemetry > telemetry_period)
        next_telemetry = t1 + telemetry_period;
    }

    deadline += period;
    const auto now = clock::now();
    const double late = std::chrono::duration<double>(now - deadline).count();
    if (late > max_lateness.load())
      max_lateness.store(late);
    if (late > 0.25)
      deadline = now; // fell far behind; resynchronise instead of bursting
    else
      std::this_thread::sleep_until(deadline);
  }
}

ControlServer::ControlServer(const Model& model, AudioBuffer loop, ServerOptions options)
{
  validate(model.config);
  if (loop.samples.empty())
    throw ConfigError("loop buffer is empty");
  if (options.buffer_size < 1)
    throw BufferError("buffer_size must be >= 1");
  if (!(options.telemetry_hz > 0.0))
    throw ConfigError("telemetry rate must be positive");
  impl_ = std::make_unique<Impl>(model, std::move(loop), std::move(options));
}

ControlServer::~ControlServer()
{
  stop();
}

void ControlServer::start()
{
  auto& s = *impl_;
  if (s.running)
    return;
  beast::error_code ec;
  const auto address = asio::ip::make_address(s.options.address, ec);
  if (ec)
    throw Error("invalid listen address '" + s.options.address + "'");
  const tcp::endpoint endpoint(address, s.options.port);
  s.acceptor.open(endpoint.protocol(), ec);
  if (!ec)
    s.acceptor.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec)
    s.acceptor.bind(endpoint, ec);
  if (!ec)
    s.acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec)
    throw Error("cannot listen on " + s.options.address + ":" + std::to_string(s.options.port) + ": " + ec.message());

  s.running = true;
  s.accept();
  s.io_thread = std::thread([&s] { s.ioc.run(); });
  s.audio_thread = std::thread([&s] { s.audio_loop(); });
}

void ControlServer::stop()
{
  if (!impl_)
    return;
  auto& s = *impl_;
  if (!s.running.exchange(false))
    return;
  if (s.audio_thread.joinable())
    s.audio_thread.join();
  // Close the listener and every client socket on the io thread before halting it,
  // so connected peers see EOF instead of a silent socket.
  std::promise<void> closed;
  asio::post(s.ioc, [&s, &closed] {
    beast::error_code ignored;
    s.acceptor.close(ignored);
    for (const auto& w : s.sessions)
      if (auto session = w.lock())
        session->shutdown();
    s.sessions.clear();
    closed.set_value();
  });
  closed.get_future().wait();
  s.ioc.stop();
  if (s.io_thread.joinable())
    s.io_thread.join();
}

unsigned short ControlServer::port() const
{
  beast::error_code ec;
  const auto ep = impl_->acceptor.local_endpoint(ec);
  return ec ? impl_->options.port : ep.port();
}

ServerStats ControlServer::stats() const
{
  ServerStats st;
  st.blocks = impl_->blocks.load();
  st.max_lateness_seconds = impl_->max_lateness.load();
  st.applied_width = impl_->applied_width.load();
  st.dropped_frames = impl_->dropped.load();
  return st;
}

const std::vector<float>& ControlServer::reference() const
{
  return impl_->reference;
}

void serve(const Model& model, AudioBuffer loop, const ServerOptions& options, const std::atomic<bool>& stop_requested)
{
  ControlServer server(model, std::move(loop), options);
  server.start();
  std::cerr << "serving on http://" << options.address << ":" << server.port() << "/ (websocket at /ws)" << std::endl;
  while (!stop_requested.load())
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  server.stop();
}

} // namespace slimnam
