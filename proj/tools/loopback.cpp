// Serves a built-in environment over the bridge protocol on stdin/stdout, or on a local TCP
// port with --listen. Used by the bridge tests and for trying the exec:/tcp: endpoints.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "attnes/bridge.hpp"

using namespace attnes;

namespace {

// Wraps an env and dies without a reply after a number of steps (simulates a crash).
class Crashing final : public Environment {
 public:
  Crashing(std::unique_ptr<Environment> inner, int after) : inner_(std::move(inner)), after_(after) {}
  const EnvSpec& spec() const override { return inner_->spec(); }
  Frame reset(std::uint64_t seed) override { return inner_->reset(seed); }
  EnvStep step(const Action& a) override {
    if (++steps_ > after_) std::_Exit(3);
    return inner_->step(a);
  }

 private:
  std::unique_ptr<Environment> inner_;
  int after_;
  int steps_ = 0;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bridge loopback adapter"};
  std::string env_name = "dodge";
  std::string modification;
  std::optional<int> listen_port;
  std::optional<int> crash_after;
  app.add_option("--env", env_name, "dodge | laneracer");
  app.add_option("--modification", modification, "rendering modification to apply");
  app.add_option("--listen", listen_port, "serve one TCP client on 127.0.0.1:PORT (0 = any free port)");
  app.add_option("--crash-after", crash_after, "exit abruptly on this many + 1 steps");
  CLI11_PARSE(app, argc, argv);

  try {
    std::unique_ptr<Environment> env = builtin_env(env_name)();
    if (!modification.empty()) env = apply_modification(std::move(env), {parse_modification(modification)});
    if (crash_after) env = std::make_unique<Crashing>(std::move(env), *crash_after);
    const auto idle = std::chrono::hours(24);

    if (!listen_port) {
      FdStream stream(STDIN_FILENO, STDOUT_FILENO, idle, false);
      serve_environment(stream, *env);
      return 0;
    }
    const int server = ::socket(AF_INET, SOCK_STREAM, 0);
    int one = 1;
    ::setsockopt(server, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(*listen_port));
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    if (::bind(server, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(server, 1) != 0) {
      std::perror("loopback: bind/listen");
      return 1;
    }
    socklen_t len = sizeof addr;
    ::getsockname(server, reinterpret_cast<sockaddr*>(&addr), &len);
    std::printf("%d\n", ntohs(addr.sin_port));
    std::fflush(stdout);
    const int client = ::accept(server, nullptr, nullptr);
    ::close(server);
    if (client < 0) {
      std::perror("loopback: accept");
      return 1;
    }
    FdStream stream(client, client, idle, true);
    serve_environment(stream, *env);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "loopback: " << e.what() << "\n";
    return 1;
  }
}
