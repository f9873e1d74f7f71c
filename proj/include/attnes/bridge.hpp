#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "attnes/envs.hpp"

namespace attnes {

// Wire protocol between the trainer and an external environment process.
//
// Frame:   u32 length (little-endian, counts tag + payload) | u8 tag | payload
// Numbers: little-endian; f64 is IEEE-754 binary64; str = u32 byte count + UTF-8 bytes.
//
//   0x01 Hello      client -> adapter   u32 version
//   0x02 Handshake  adapter -> client   u32 version, str env, u32 H, u32 W, u32 C,
//                                       u8 kind (0 continuous, 1 discrete), u32 dim,
//                                       dim x (f64 lo, f64 hi) if continuous, u32 max_steps
//   0x03 Reset      client -> adapter   u64 seed
//   0x04 Step       client -> adapter   u32 count, count x f64 (discrete: one value, the index)
//   0x05 Obs        adapter -> client   f64 reward, u8 done, H*W*C bytes row-major RGB
//   0x06 Error      adapter -> client   u32 code, str text
//   0x07 Close      client -> adapter   (empty)
//
// Every Reset and Step is answered by exactly one Obs or Error; there is no pipelining.

inline constexpr std::uint32_t kBridgeVersion = 1;

enum class BridgeTag : std::uint8_t {
  Hello = 0x01,
  Handshake = 0x02,
  Reset = 0x03,
  Step = 0x04,
  Obs = 0x05,
  Error = 0x06,
  Close = 0x07,
};

enum class BridgeErrorCode : std::uint32_t {
  BadRequest = 1,  // protocol misuse; fatal
  EnvFailure = 2,  // the wrapped environment failed; the rollout is lost
};

struct BridgeHandshake {
  std::uint32_t version = kBridgeVersion;
  std::string env_name;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 3;
  ActionSpec action;
  std::uint32_t max_steps = 0;
  bool operator==(const BridgeHandshake&) const = default;
};

struct HelloMsg {
  std::uint32_t version = kBridgeVersion;
};
struct ResetMsg {
  std::uint64_t seed = 0;
};
struct StepMsg {
  std::vector<double> values;
};
struct ObsMsg {
  double reward = 0.0;
  bool done = false;
  std::vector<std::uint8_t> frame;
};
struct ErrorMsg {
  std::uint32_t code = 0;
  std::string text;
};
struct CloseMsg {};

using BridgeMessage =
    std::variant<HelloMsg, BridgeHandshake, ResetMsg, StepMsg, ObsMsg, ErrorMsg, CloseMsg>;

/// Encodes one framed message. Obs frames are written verbatim.
std::vector<std::uint8_t> encode_message(const BridgeMessage& msg);
/// Decodes the payload after the length prefix. `frame_bytes` is the H*W*C expected for Obs;
/// a different payload length is a ProtocolError.
BridgeMessage decode_message(std::span<const std::uint8_t> body, std::size_t frame_bytes);

/// Byte transport. Implementations throw SessionError on EOF, broken pipe or timeout.
class Stream {
 public:
  virtual ~Stream() = default;
  virtual void write_all(std::span<const std::uint8_t> bytes) = 0;
  virtual void read_exact(std::span<std::uint8_t> out) = 0;
};

/// Reads from one descriptor and writes to another (pipes, or one socket used twice).
class FdStream final : public Stream {
 public:
  FdStream(int read_fd, int write_fd, std::chrono::milliseconds timeout, bool owns = true);
  ~FdStream() override;
  FdStream(const FdStream&) = delete;
  FdStream& operator=(const FdStream&) = delete;

  void write_all(std::span<const std::uint8_t> bytes) override;
  void read_exact(std::span<std::uint8_t> out) override;

 private:
  int read_fd_;
  int write_fd_;
  std::chrono::milliseconds timeout_;
  bool owns_;
};

/// Sends a framed message.
void send_message(Stream& stream, const BridgeMessage& msg);
/// Reads one framed message (lengths above 64 MiB are rejected).
BridgeMessage receive_message(Stream& stream, std::size_t frame_bytes);

/// Client side of one adapter connection.
class BridgeSession {
 public:
  /// Sends Hello and validates the Handshake (version, positive shape, action spec).
  explicit BridgeSession(std::unique_ptr<Stream> stream, int child_pid = -1);
  ~BridgeSession();
  BridgeSession(const BridgeSession&) = delete;
  BridgeSession& operator=(const BridgeSession&) = delete;

  const BridgeHandshake& handshake() const { return handshake_; }

  Frame reset(std::uint64_t seed);
  EnvStep step(const Action& action);
  /// Sends Close and reaps the adapter process if this session spawned it.
  void close();

  /// Action as sent on the wire.
  static std::vector<double> action_values(const Action& action, const ActionSpec& spec);

 private:
  EnvStep await_obs();

  std::unique_ptr<Stream> stream_;
  BridgeHandshake handshake_;
  int child_pid_;
  bool closed_ = false;
};

struct BridgeOptions {
  std::chrono::milliseconds timeout{30000};
};

/// Endpoints: "tcp:HOST:PORT" for a local socket, "exec:COMMAND" to spawn an adapter and talk
/// to it over its stdin/stdout.
std::unique_ptr<BridgeSession> connect_bridge(const std::string& endpoint,
                                              const BridgeOptions& options = {});

/// Makes a bridged environment look like a built-in one.
class BridgeEnvironment final : public Environment {
 public:
  explicit BridgeEnvironment(std::unique_ptr<BridgeSession> session);
  const EnvSpec& spec() const override { return spec_; }
  Frame reset(std::uint64_t seed) override { return session_->reset(seed); }
  EnvStep step(const Action& action) override { return session_->step(action); }

 private:
  std::unique_ptr<BridgeSession> session_;
  EnvSpec spec_;
};

EnvFactory bridge_env(std::string endpoint, BridgeOptions options = {});

/// Adapter side: serves `env` until Close or EOF. Used by the loopback adapter and tests.
void serve_environment(Stream& stream, Environment& env);

}  // namespace attnes
