#include "attnes/bridge.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include "attnes/binary_io.hpp"

namespace attnes {

namespace {

constexpr std::uint32_t kMaxMessage = 64u << 20;

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

void write_action_spec(ByteWriter& w, const ActionSpec& spec) {
  w.u8(spec.kind == ActionKind::Continuous ? 0 : 1);
  w.u32(static_cast<std::uint32_t>(spec.dim));
  if (spec.kind == ActionKind::Continuous)
    for (const auto& b : spec.bounds) {
      w.f64(b.lo);
      w.f64(b.hi);
    }
}

ActionSpec read_action_spec(ByteReader& r) {
  const std::uint8_t kind = r.u8();
  const std::uint32_t dim = r.u32();
  if (dim == 0) throw ProtocolError("handshake: action dimension must be positive");
  if (kind == 0) {
    std::vector<ActionBounds> bounds(dim);
    for (auto& b : bounds) {
      b.lo = r.f64();
      b.hi = r.f64();
    }
    try {
      return ActionSpec::continuous(std::move(bounds));
    } catch (const ConfigError& e) {
      throw ProtocolError(std::string("handshake: ") + e.what());
    }
  }
  if (kind == 1) return ActionSpec::discrete(dim);
  throw ProtocolError("handshake: unknown action kind " + std::to_string(kind));
}

Frame bytes_to_frame(std::span<const std::uint8_t> bytes, int h, int w) {
  Frame f(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i) f.pixels[i] = static_cast<float>(bytes[i]) / 255.0f;
  return f;
}

std::vector<std::uint8_t> frame_to_bytes(const Frame& f) { return to_image(f).bytes; }

}  // namespace

std::vector<std::uint8_t> encode_message(const BridgeMessage& msg) {
  ByteWriter body;
  std::visit(Overloaded{
                 [&](const HelloMsg& m) {
                   body.u8(static_cast<std::uint8_t>(BridgeTag::Hello));
                   body.u32(m.version);
                 },
                 [&](const BridgeHandshake& m) {
                   body.u8(static_cast<std::uint8_t>(BridgeTag::Handshake));
                   body.u32(m.version);
                   body.str(m.env_name);
                   body.u32(m.height);
                   body.u32(m.width);
                   body.u32(m.channels);
                   write_action_spec(body, m.action);
                   body.u32(m.max_steps);
                 },
                 [&](const ResetMsg& m) {
                   body.u8(static_cast<std::uint8_t>(BridgeTag::Reset));
                   body.u64(m.seed);
                 },
                 [&](const StepMsg& m) {
                   body.u8(static_cast<std::uint8_t>(BridgeTag::Step));
                   body.u32(static_cast<std::uint32_t>(m.values.size()));
                   for (double v : m.values) body.f64(v);
                 },
                 [&](const ObsMsg& m) {
                   body.u8(static_cast<std::uint8_t>(BridgeTag::Obs));
                   body.f64(m.reward);
                   body.u8(m.done ? 1 : 0);
                   body.bytes(m.frame);
                 },
                 [&](const ErrorMsg& m) {
                   body.u8(static_cast<std::uint8_t>(BridgeTag::Error));
                   body.u32(m.code);
                   body.str(m.text);
                 },
                 [&](const CloseMsg&) { body.u8(static_cast<std::uint8_t>(BridgeTag::Close)); },
             },
             msg);
  ByteWriter framed;
  framed.u32(static_cast<std::uint32_t>(body.data().size()));
  framed.bytes(body.data());
  return framed.take();
}

BridgeMessage decode_message(std::span<const std::uint8_t> body, std::size_t frame_bytes) {
  try {
    ByteReader r(body);
    const auto tag = static_cast<BridgeTag>(r.u8());
    BridgeMessage out;
    switch (tag) {
      case BridgeTag::Hello:
        out = HelloMsg{r.u32()};
        break;
      case BridgeTag::Handshake: {
        BridgeHandshake h;
        h.version = r.u32();
        h.env_name = r.str();
        h.height = r.u32();
        h.width = r.u32();
        h.channels = r.u32();
        h.action = read_action_spec(r);
        h.max_steps = r.u32();
        out = std::move(h);
        break;
      }
      case BridgeTag::Reset:
        out = ResetMsg{r.u64()};
        break;
      case BridgeTag::Step: {
        StepMsg s;
        s.values.resize(r.u32());
        for (double& v : s.values) v = r.f64();
        out = std::move(s);
        break;
      }
      case BridgeTag::Obs: {
        ObsMsg o;
        o.reward = r.f64();
        o.done = r.u8() != 0;
        if (r.remaining() != frame_bytes)
          throw ProtocolError("obs: frame payload is " + std::to_string(r.remaining()) +
                              " bytes, expected " + std::to_string(frame_bytes));
        const auto px = r.bytes(frame_bytes);
        o.frame.assign(px.begin(), px.end());
        out = std::move(o);
        break;
      }
      case BridgeTag::Error: {
        ErrorMsg e;
        e.code = r.u32();
        e.text = r.str();
        out = std::move(e);
        break;
      }
      case BridgeTag::Close:
        out = CloseMsg{};
        break;
      default:
        throw ProtocolError("unknown message tag " + std::to_string(static_cast<int>(tag)));
    }
    if (r.remaining() != 0)
      throw ProtocolError("message has " + std::to_string(r.remaining()) + " trailing bytes");
    return out;
  } catch (const CodecError& e) {
    throw ProtocolError(std::string("malformed message: ") + e.what());
  }
}

// ---- Transport ---------------------------------------------------------------------------

FdStream::FdStream(int read_fd, int write_fd, std::chrono::milliseconds timeout, bool owns)
    : read_fd_(read_fd), write_fd_(write_fd), timeout_(timeout), owns_(owns) {}

FdStream::~FdStream() {
  if (!owns_) return;
  if (read_fd_ >= 0) ::close(read_fd_);
  if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
}

void FdStream::write_all(std::span<const std::uint8_t> bytes) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::write(write_fd_, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw SessionError(std::string("bridge write failed: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

void FdStream::read_exact(std::span<std::uint8_t> out) {
  std::size_t done = 0;
  while (done < out.size()) {
    pollfd pfd{read_fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(timeout_.count()));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw SessionError(std::string("bridge poll failed: ") + std::strerror(errno));
    }
    if (ready == 0)
      throw SessionError("bridge timed out after " + std::to_string(timeout_.count()) + " ms");
    const ssize_t n = ::read(read_fd_, out.data() + done, out.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw SessionError(std::string("bridge read failed: ") + std::strerror(errno));
    }
    if (n == 0) throw SessionError("bridge peer closed the connection");
    done += static_cast<std::size_t>(n);
  }
}

void send_message(Stream& stream, const BridgeMessage& msg) { stream.write_all(encode_message(msg)); }

BridgeMessage receive_message(Stream& stream, std::size_t frame_bytes) {
  std::uint8_t len_bytes[4];
  stream.read_exact(len_bytes);
  const std::uint32_t len = static_cast<std::uint32_t>(len_bytes[0]) |
                            (static_cast<std::uint32_t>(len_bytes[1]) << 8) |
                            (static_cast<std::uint32_t>(len_bytes[2]) << 16) |
                            (static_cast<std::uint32_t>(len_bytes[3]) << 24);
  if (len == 0 || len > kMaxMessage)
    throw ProtocolError("bridge message length " + std::to_string(len) + " out of range");
  std::vector<std::uint8_t> body(len);
  stream.read_exact(body);
  return decode_message(body, frame_bytes);
}

// ---- Client ------------------------------------------------------------------------------

BridgeSession::BridgeSession(std::unique_ptr<Stream> stream, int child_pid)
    : stream_(std::move(stream)), child_pid_(child_pid) {
  send_message(*stream_, HelloMsg{kBridgeVersion});
  BridgeMessage reply = receive_message(*stream_, 0);
  if (auto* err = std::get_if<ErrorMsg>(&reply))
    throw ProtocolError("adapter refused handshake: " + err->text);
  auto* hs = std::get_if<BridgeHandshake>(&reply);
  if (!hs) throw ProtocolError("expected a handshake from the adapter");
  if (hs->version != kBridgeVersion)
    throw ProtocolError("bridge version mismatch: adapter speaks " + std::to_string(hs->version) +
                        ", client speaks " + std::to_string(kBridgeVersion));
  if (hs->height == 0 || hs->width == 0 || hs->channels != 3)
    throw ProtocolError("handshake: observation shape must be H x W x 3 with H, W > 0");
  if (hs->max_steps == 0) throw ProtocolError("handshake: max_steps must be positive");
  handshake_ = std::move(*hs);
}

BridgeSession::~BridgeSession() {
  try {
    close();
  } catch (...) {
  }
}

std::vector<double> BridgeSession::action_values(const Action& action, const ActionSpec& spec) {
  if (spec.kind == ActionKind::Discrete) return {static_cast<double>(action.index)};
  return action.values;
}

EnvStep BridgeSession::await_obs() {
  const std::size_t frame_bytes =
      static_cast<std::size_t>(handshake_.height) * handshake_.width * handshake_.channels;
  BridgeMessage reply = receive_message(*stream_, frame_bytes);
  if (auto* err = std::get_if<ErrorMsg>(&reply)) {
    if (err->code == static_cast<std::uint32_t>(BridgeErrorCode::EnvFailure))
      throw SessionError("adapter environment failure: " + err->text);
    throw ProtocolError("adapter rejected request: " + err->text);
  }
  auto* obs = std::get_if<ObsMsg>(&reply);
  if (!obs) throw ProtocolError("expected an observation from the adapter");
  return {bytes_to_frame(obs->frame, static_cast<int>(handshake_.height),
                         static_cast<int>(handshake_.width)),
          obs->reward, obs->done};
}

Frame BridgeSession::reset(std::uint64_t seed) {
  if (closed_) throw ProtocolError("bridge session is closed");
  send_message(*stream_, ResetMsg{seed});
  return await_obs().observation;
}

EnvStep BridgeSession::step(const Action& action) {
  if (closed_) throw ProtocolError("bridge session is closed");
  send_message(*stream_, StepMsg{action_values(action, handshake_.action)});
  return await_obs();
}

void BridgeSession::close() {
  if (closed_) return;
  closed_ = true;
  try {
    send_message(*stream_, CloseMsg{});
  } catch (const SessionError&) {
  }
  stream_.reset();
  if (child_pid_ > 0) {
    int status = 0;
    ::waitpid(child_pid_, &status, 0);
    child_pid_ = -1;
  }
}

std::unique_ptr<BridgeSession> connect_bridge(const std::string& endpoint,
                                              const BridgeOptions& options) {
  // Writes to a dead adapter must surface as errors, not kill the trainer.
  std::signal(SIGPIPE, SIG_IGN);
  if (endpoint.rfind("exec:", 0) == 0) {
    const std::string command = endpoint.substr(5);
    int to_child[2], from_child[2];
    // O_CLOEXEC from the start: sessions opened concurrently must not inherit each other's pipes.
    if (::pipe2(to_child, O_CLOEXEC) != 0) throw SessionError("pipe() failed");
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw SessionError("pipe() failed");
    }
    const pid_t pid = ::fork();
    if (pid < 0) throw SessionError("fork() failed");
    if (pid == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    auto stream = std::make_unique<FdStream>(from_child[0], to_child[1], options.timeout);
    try {
      return std::make_unique<BridgeSession>(std::move(stream), pid);
    } catch (...) {
      ::kill(pid, SIGKILL);
      ::waitpid(pid, nullptr, 0);
      throw;
    }
  }
  if (endpoint.rfind("tcp:", 0) == 0) {
    const std::string rest = endpoint.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) throw ConfigError("tcp endpoint must be tcp:HOST:PORT");
    const std::string host = rest.substr(0, colon), port = rest.substr(colon + 1);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || !res)
      throw SessionError("cannot resolve " + host + ":" + port);
    int fd = -1;
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
      fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
      ::close(fd);
      fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw SessionError("cannot connect to " + endpoint);
    return std::make_unique<BridgeSession>(std::make_unique<FdStream>(fd, fd, options.timeout));
  }
  throw ConfigError("unknown bridge endpoint '" + endpoint + "' (expected tcp:HOST:PORT or exec:COMMAND)");
}

BridgeEnvironment::BridgeEnvironment(std::unique_ptr<BridgeSession> session)
    : session_(std::move(session)) {
  const BridgeHandshake& h = session_->handshake();
  spec_.name = h.env_name;
  spec_.observation_size = static_cast<int>(h.height);
  spec_.action = h.action;
  spec_.max_steps = static_cast<int>(h.max_steps);
}

EnvFactory bridge_env(std::string endpoint, BridgeOptions options) {
  return [endpoint = std::move(endpoint), options]() -> std::unique_ptr<Environment> {
    return std::make_unique<BridgeEnvironment>(connect_bridge(endpoint, options));
  };
}

// ---- Adapter -----------------------------------------------------------------------------

void serve_environment(Stream& stream, Environment& env) {
  const EnvSpec& spec = env.spec();
  try {
    BridgeMessage hello = receive_message(stream, 0);
    auto* h = std::get_if<HelloMsg>(&hello);
    if (!h || h->version != kBridgeVersion) {
      send_message(stream, ErrorMsg{static_cast<std::uint32_t>(BridgeErrorCode::BadRequest),
                                    "expected Hello with version " + std::to_string(kBridgeVersion)});
      return;
    }
    BridgeHandshake hs;
    hs.env_name = spec.name;
    hs.height = hs.width = static_cast<std::uint32_t>(spec.observation_size);
    hs.action = spec.action;
    hs.max_steps = static_cast<std::uint32_t>(spec.max_steps);
    send_message(stream, hs);

    for (;;) {
      BridgeMessage req = receive_message(stream, 0);
      if (std::holds_alternative<CloseMsg>(req)) return;
      try {
        if (auto* r = std::get_if<ResetMsg>(&req)) {
          send_message(stream, ObsMsg{0.0, false, frame_to_bytes(env.reset(r->seed))});
        } else if (auto* s = std::get_if<StepMsg>(&req)) {
          Action a;
          if (spec.action.kind == ActionKind::Discrete) {
            if (s->values.size() != 1) throw ProtocolError("discrete step needs one value");
            a.index = static_cast<int>(s->values[0]);
          } else {
            a.values = s->values;
          }
          EnvStep st = env.step(a);
          send_message(stream, ObsMsg{st.reward, st.done, frame_to_bytes(st.observation)});
        } else {
          throw ProtocolError("unexpected message from client");
        }
      } catch (const ProtocolError& e) {
        send_message(stream, ErrorMsg{static_cast<std::uint32_t>(BridgeErrorCode::BadRequest), e.what()});
      } catch (const SessionError&) {
        throw;
      } catch (const std::exception& e) {
        send_message(stream, ErrorMsg{static_cast<std::uint32_t>(BridgeErrorCode::EnvFailure), e.what()});
      }
    }
  } catch (const SessionError&) {
    // Client went away.
  }
}

}  // namespace attnes
