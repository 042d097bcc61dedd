#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "denois/pnp.hpp"
#include "denois/refinement.hpp"
#include "denois/tensor_file.hpp"

namespace denois {

// Frames are {u32 LE length}{u8 kind}{body}, the length counting kind and
// body. Handshake body: {u32 version}{f32 sigma_min}{f32 sigma_max}. Denoise
// and refine bodies: {u32 n_tensors}{tensor files back to back}, denoise
// followed by {f32 sigma}. A response repeats the request kind with exactly
// one tensor, or is kind 255 with a UTF-8 error message as body.

inline constexpr std::uint32_t kProtocolVersion = 1;

enum class FrameKind : std::uint8_t { handshake = 0, denoise = 1, refine = 2, error = 255 };

struct Frame {
  FrameKind kind = FrameKind::error;
  std::string body;
};

struct Handshake {
  std::uint32_t version = kProtocolVersion;
  float sigma_min = 0.0f;
  float sigma_max = 0.0f;
};

std::string encode_frame(const Frame& frame);
std::string encode_handshake(const Handshake& h);
Handshake decode_handshake(const Frame& frame);
std::string encode_tensors(const std::vector<Tensor>& tensors);
/// Decodes {u32 n}{tensors}; the number of bytes used goes to consumed.
std::vector<Tensor> decode_tensors(std::string_view body, std::size_t* consumed);

/// Byte stream to a peer with per-call deadlines.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual void write_all(std::string_view bytes, std::chrono::milliseconds timeout) = 0;
  /// Throws ProtocolError on EOF and on timeout.
  virtual std::string read_exact(std::size_t n, std::chrono::milliseconds timeout) = 0;
};

/// Talks to a child process over its stdin/stdout. The child is terminated
/// when the channel is destroyed.
class ChildProcessChannel final : public Channel {
 public:
  explicit ChildProcessChannel(const std::vector<std::string>& argv);
  ~ChildProcessChannel() override;
  ChildProcessChannel(const ChildProcessChannel&) = delete;
  ChildProcessChannel& operator=(const ChildProcessChannel&) = delete;

  void write_all(std::string_view bytes, std::chrono::milliseconds timeout) override;
  std::string read_exact(std::size_t n, std::chrono::milliseconds timeout) override;

 private:
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
};

/// Unix-domain stream socket client.
class SocketChannel final : public Channel {
 public:
  explicit SocketChannel(const std::string& path);
  ~SocketChannel() override;
  SocketChannel(const SocketChannel&) = delete;
  SocketChannel& operator=(const SocketChannel&) = delete;

  void write_all(std::string_view bytes, std::chrono::milliseconds timeout) override;
  std::string read_exact(std::size_t n, std::chrono::milliseconds timeout) override;

 private:
  int fd_ = -1;
};

/// Channel over an already open pair of descriptors (server side, tests).
class FdChannel final : public Channel {
 public:
  FdChannel(int read_fd, int write_fd) : read_fd_(read_fd), write_fd_(write_fd) {}
  void write_all(std::string_view bytes, std::chrono::milliseconds timeout) override;
  std::string read_exact(std::size_t n, std::chrono::milliseconds timeout) override;

 private:
  int read_fd_;
  int write_fd_;
};

void send_frame(Channel& channel, const Frame& frame, std::chrono::milliseconds timeout);
Frame receive_frame(Channel& channel, std::chrono::milliseconds timeout);

inline constexpr std::chrono::milliseconds kDefaultProtocolTimeout{60000};

/// Client side: handshakes on construction and checks the version.
class ProtocolClient {
 public:
  explicit ProtocolClient(std::unique_ptr<Channel> channel,
                          std::chrono::milliseconds timeout = kDefaultProtocolTimeout);

  const Handshake& server() const { return server_; }
  /// Sends one request and returns the single response tensor. Error frames
  /// become ProtocolError carrying the server's message.
  Tensor request(FrameKind kind, const std::vector<Tensor>& tensors, const float* sigma = nullptr);

 private:
  std::unique_ptr<Channel> channel_;
  std::chrono::milliseconds timeout_;
  Handshake server_;
};

/// Launches `command` (split on spaces) or connects to `unix:PATH`.
std::unique_ptr<Channel> open_channel(const std::string& endpoint);

/// DenoiserPlugin backed by an external process. Images travel as f64
/// tensors of shape [ny, nx] in solver units: "image" first, then one
/// "condition" tensor per condition, then sigma.
class ExternalDenoiser final : public DenoiserPlugin {
 public:
  explicit ExternalDenoiser(std::unique_ptr<ProtocolClient> client) : client_(std::move(client)) {}
  std::string name() const override { return "external"; }
  SigmaRange sigma_range() const override;
  /// Throws ConfigError before sending if sigma is outside the declared range.
  std::vector<double> denoise(std::span<const double> image, const ImagingGrid& grid,
                              double sigma,
                              std::span<const std::vector<double>> conditions) override;

 private:
  std::unique_ptr<ProtocolClient> client_;
};

/// RefinerPlugin backed by an external process. Sends three f64 tensors
/// divided by measurement_scale (seconds per unit): "b_prime" and
/// "projected" of shape [pairs, nu, nv] and "priors" of shape
/// [3, pairs, nu, nv] stacking aperture, low_corr and directivity. Expects
/// one [pairs, nu, nv] tensor back in the same units.
class ExternalRefiner final : public RefinerPlugin {
 public:
  ExternalRefiner(std::unique_ptr<ProtocolClient> client, double measurement_scale)
      : client_(std::move(client)), scale_(measurement_scale) {}
  std::string name() const override { return "external"; }
  std::vector<double> refine(const RefinerInput& input) override;

 private:
  std::unique_ptr<ProtocolClient> client_;
  double scale_;
};

/// Tensors of a refine request, as ExternalRefiner sends them.
std::vector<Tensor> refine_request_tensors(const RefinerInput& input, double measurement_scale);

}  // namespace denois
