// Minimal wire-protocol peer on stdin/stdout for tests: answers every
// request with its first tensor unchanged, or misbehaves on request.

#include <chrono>
#include <csignal>
#include <cstring>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "denois/error.hpp"
#include "denois/wire_protocol.hpp"

using namespace denois;

int main(int argc, char** argv) {
  CLI::App app{"wire-protocol echo peer"};
  std::uint32_t version = kProtocolVersion;
  std::string mode = "echo";
  float sigma_min = 0.0f;
  float sigma_max = 1e6f;
  app.add_option("--version", version, "protocol version to announce");
  app.add_option("--mode", mode, "echo, bad-shape, error, hang or exit")
      ->check(CLI::IsMember({"echo", "bad-shape", "error", "hang", "exit"}));
  app.add_option("--sigma-min", sigma_min);
  app.add_option("--sigma-max", sigma_max);
  CLI11_PARSE(app, argc, argv);

  std::signal(SIGPIPE, SIG_IGN);
  FdChannel io(0, 1);
  const auto forever = std::chrono::milliseconds(24 * 3600 * 1000);
  try {
    const Frame hello = receive_frame(io, forever);
    if (hello.kind != FrameKind::handshake) return 2;
    send_frame(io, {FrameKind::handshake, encode_handshake({version, sigma_min, sigma_max})},
               forever);
    for (;;) {
      const Frame req = receive_frame(io, forever);
      if (mode == "hang") std::this_thread::sleep_for(forever);
      if (mode == "exit") return 0;
      if (mode == "error") {
        send_frame(io, {FrameKind::error, "stub asked to fail"}, forever);
        continue;
      }
      std::size_t used = 0;
      auto tensors = decode_tensors(req.body, &used);
      if (req.kind == FrameKind::denoise) {
        float sigma = 0.0f;
        if (req.body.size() >= used + 4) std::memcpy(&sigma, req.body.data() + used, 4);
        if (sigma < sigma_min || sigma > sigma_max) {
          send_frame(io, {FrameKind::error, "sigma outside the declared range"}, forever);
          continue;
        }
      }
      Tensor out = tensors.at(0);
      if (mode == "bad-shape") {
        out = Tensor::from_f64(out.name, {1, out.element_count() + 1},
                               std::vector<double>(out.element_count() + 1, 0.0));
      }
      send_frame(io, {req.kind, encode_tensors({out})}, forever);
    }
  } catch (const ProtocolError&) {
    return 0;  // client went away
  } catch (const std::exception& e) {
    std::cerr << "denois_echo_stub: " << e.what() << "\n";
    return 1;
  }
}
