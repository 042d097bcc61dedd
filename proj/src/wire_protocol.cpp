#include "denois/wire_protocol.hpp"

#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>
#include <mutex>
#include <sstream>

#include <fcntl.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <sys/wait.h>
#include <unistd.h>

#include "denois/error.hpp"

namespace denois {

namespace {

using Clock = std::chrono::steady_clock;

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { std::signal(SIGPIPE, SIG_IGN); });
}

template <class T>
void put(std::string& out, T v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::string_view in, std::size_t at, const char* what) {
  if (in.size() < at + sizeof(T)) throw ProtocolError(std::string("truncated frame: ") + what);
  T v;
  std::memcpy(&v, in.data() + at, sizeof(T));
  return v;
}

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
  return static_cast<int>(std::max<long long>(0, left.count()));
}

void wait_fd(int fd, short events, Clock::time_point deadline) {
  for (;;) {
    pollfd p{fd, events, 0};
    const int r = ::poll(&p, 1, remaining_ms(deadline));
    if (r > 0) return;
    if (r == 0) throw ProtocolError("timed out waiting for peer");
    if (errno != EINTR) throw ProtocolError(std::string("poll failed: ") + std::strerror(errno));
  }
}

void write_fd(int fd, std::string_view bytes, std::chrono::milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  std::size_t done = 0;
  while (done < bytes.size()) {
    wait_fd(fd, POLLOUT, deadline);
    const ssize_t n = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw ProtocolError(std::string("write to peer failed: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

std::string read_fd(int fd, std::size_t count, std::chrono::milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  std::string out(count, '\0');
  std::size_t done = 0;
  while (done < count) {
    wait_fd(fd, POLLIN, deadline);
    const ssize_t n = ::read(fd, out.data() + done, count - done);
    if (n == 0) throw ProtocolError("peer closed the connection");
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw ProtocolError(std::string("read from peer failed: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
  return out;
}

std::vector<std::string> split_command(const std::string& command) {
  std::istringstream ss(command);
  std::vector<std::string> out;
  for (std::string w; ss >> w;) out.push_back(w);
  return out;
}

}  // namespace

std::string encode_frame(const Frame& frame) {
  std::string out;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(frame.body.size() + 1));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(frame.kind));
  out += frame.body;
  return out;
}

std::string encode_handshake(const Handshake& h) {
  std::string body;
  put(body, h.version);
  put(body, h.sigma_min);
  put(body, h.sigma_max);
  return body;
}

Handshake decode_handshake(const Frame& frame) {
  if (frame.kind != FrameKind::handshake) {
    throw ProtocolError("expected a handshake frame, got kind " +
                        std::to_string(static_cast<int>(frame.kind)));
  }
  Handshake h;
  h.version = get<std::uint32_t>(frame.body, 0, "handshake version");
  if (h.version != kProtocolVersion) {
    throw ProtocolError("protocol version mismatch: peer speaks " + std::to_string(h.version) +
                        ", expected " + std::to_string(kProtocolVersion));
  }
  h.sigma_min = get<float>(frame.body, 4, "handshake sigma_min");
  h.sigma_max = get<float>(frame.body, 8, "handshake sigma_max");
  return h;
}

std::string encode_tensors(const std::vector<Tensor>& tensors) {
  std::string body;
  put<std::uint32_t>(body, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) body += encode_tensor(t);
  return body;
}

std::vector<Tensor> decode_tensors(std::string_view body, std::size_t* consumed) {
  const auto n = get<std::uint32_t>(body, 0, "tensor count");
  std::size_t at = 4;
  std::vector<Tensor> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::size_t used = 0;
    try {
      out.push_back(decode_tensor(body.substr(at), &used, "frame tensor " + std::to_string(i)));
    } catch (const IoError& e) {
      throw ProtocolError(e.what());
    }
    at += used;
  }
  if (consumed != nullptr) *consumed = at;
  return out;
}

void send_frame(Channel& channel, const Frame& frame, std::chrono::milliseconds timeout) {
  channel.write_all(encode_frame(frame), timeout);
}

Frame receive_frame(Channel& channel, std::chrono::milliseconds timeout) {
  const auto head = channel.read_exact(4, timeout);
  std::uint32_t len;
  std::memcpy(&len, head.data(), 4);
  if (len == 0) throw ProtocolError("empty frame");
  const auto rest = channel.read_exact(len, timeout);
  return {static_cast<FrameKind>(static_cast<std::uint8_t>(rest[0])), rest.substr(1)};
}

ChildProcessChannel::ChildProcessChannel(const std::vector<std::string>& argv) {
  if (argv.empty()) throw ConfigError("empty external command");
  ignore_sigpipe();
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe(in_pipe) != 0) throw ProtocolError("pipe failed");
  if (::pipe(out_pipe) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw ProtocolError("pipe failed");
  }
  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);
  const pid_t pid = ::fork();
  if (pid < 0) throw ProtocolError("fork failed");
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::execvp(args[0], args.data());
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::fcntl(in_pipe[1], F_SETFD, FD_CLOEXEC);
  ::fcntl(out_pipe[0], F_SETFD, FD_CLOEXEC);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

ChildProcessChannel::~ChildProcessChannel() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (pid_ > 0) {
    // Closing stdin asks the child to exit; give it a moment, then kill it.
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, nullptr, WNOHANG) == pid_) return;
      ::usleep(10000);
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
  }
}

void ChildProcessChannel::write_all(std::string_view bytes, std::chrono::milliseconds timeout) {
  write_fd(to_child_, bytes, timeout);
}

std::string ChildProcessChannel::read_exact(std::size_t n, std::chrono::milliseconds timeout) {
  return read_fd(from_child_, n, timeout);
}

SocketChannel::SocketChannel(const std::string& path) {
  ignore_sigpipe();
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  if (path.size() >= sizeof(addr.sun_path)) throw ConfigError("socket path too long: " + path);
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  fd_ = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd_ < 0) throw ProtocolError("socket failed");
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd_);
    fd_ = -1;
    throw ProtocolError("cannot connect to " + path + ": " + why);
  }
}

SocketChannel::~SocketChannel() {
  if (fd_ >= 0) ::close(fd_);
}

void SocketChannel::write_all(std::string_view bytes, std::chrono::milliseconds timeout) {
  write_fd(fd_, bytes, timeout);
}

std::string SocketChannel::read_exact(std::size_t n, std::chrono::milliseconds timeout) {
  return read_fd(fd_, n, timeout);
}

void FdChannel::write_all(std::string_view bytes, std::chrono::milliseconds timeout) {
  write_fd(write_fd_, bytes, timeout);
}

std::string FdChannel::read_exact(std::size_t n, std::chrono::milliseconds timeout) {
  return read_fd(read_fd_, n, timeout);
}

ProtocolClient::ProtocolClient(std::unique_ptr<Channel> channel, std::chrono::milliseconds timeout)
    : channel_(std::move(channel)), timeout_(timeout) {
  send_frame(*channel_, {FrameKind::handshake, encode_handshake({})}, timeout_);
  const Frame reply = receive_frame(*channel_, timeout_);
  if (reply.kind == FrameKind::error) throw ProtocolError("handshake rejected: " + reply.body);
  server_ = decode_handshake(reply);
}

Tensor ProtocolClient::request(FrameKind kind, const std::vector<Tensor>& tensors,
                               const float* sigma) {
  std::string body = encode_tensors(tensors);
  if (sigma != nullptr) put(body, *sigma);
  send_frame(*channel_, {kind, std::move(body)}, timeout_);
  const Frame reply = receive_frame(*channel_, timeout_);
  if (reply.kind == FrameKind::error) throw ProtocolError("external process error: " + reply.body);
  if (reply.kind != kind) {
    throw ProtocolError("response kind " + std::to_string(static_cast<int>(reply.kind)) +
                        " does not match request kind " + std::to_string(static_cast<int>(kind)));
  }
  std::size_t used = 0;
  auto out = decode_tensors(reply.body, &used);
  if (out.size() != 1 || used != reply.body.size()) {
    throw ProtocolError("response must carry exactly one tensor, got " + std::to_string(out.size()));
  }
  return std::move(out.front());
}

std::unique_ptr<Channel> open_channel(const std::string& endpoint) {
  if (endpoint.rfind("unix:", 0) == 0) return std::make_unique<SocketChannel>(endpoint.substr(5));
  return std::make_unique<ChildProcessChannel>(split_command(endpoint));
}

SigmaRange ExternalDenoiser::sigma_range() const {
  return {client_->server().sigma_min, client_->server().sigma_max};
}

std::vector<double> ExternalDenoiser::denoise(std::span<const double> image,
                                              const ImagingGrid& grid, double sigma,
                                              std::span<const std::vector<double>> conditions) {
  const auto f_sigma = static_cast<float>(sigma);
  const auto& hs = client_->server();
  if (!(f_sigma >= hs.sigma_min && f_sigma <= hs.sigma_max)) {
    throw ConfigError("sigma " + std::to_string(sigma) + " outside the declared range [" +
                      std::to_string(hs.sigma_min) + ", " + std::to_string(hs.sigma_max) + "]");
  }
  const std::vector<std::size_t> shape{static_cast<std::size_t>(grid.ny),
                                       static_cast<std::size_t>(grid.nx)};
  std::vector<Tensor> tensors{Tensor::from_f64("image", shape, image)};
  for (const auto& c : conditions) tensors.push_back(Tensor::from_f64("condition", shape, c));
  const Tensor out = client_->request(FrameKind::denoise, tensors, &f_sigma);
  out.expect_shape(shape, "external denoiser");
  auto values = out.to_f64();
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericalError("external denoiser returned a non-finite value");
  }
  return values;
}

std::vector<Tensor> refine_request_tensors(const RefinerInput& input, double measurement_scale) {
  const MeasurementShape s = input.b_prime.shape;
  const std::vector<std::size_t> shape{static_cast<std::size_t>(s.pairs),
                                       static_cast<std::size_t>(s.nu),
                                       static_cast<std::size_t>(s.nv)};
  std::vector<double> b(s.size());
  std::vector<double> proj(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    b[i] = input.b_prime.values[i] / measurement_scale;
    proj[i] = input.projected[i] / measurement_scale;
  }
  std::vector<double> priors;
  priors.reserve(3 * s.size());
  for (auto v : input.priors.aperture) priors.push_back(v);
  for (auto v : input.priors.low_corr) priors.push_back(v);
  for (auto v : input.priors.directivity) priors.push_back(v);
  return {Tensor::from_f64("b_prime", shape, b), Tensor::from_f64("projected", shape, proj),
          Tensor::from_f64("priors", {3, shape[0], shape[1], shape[2]}, priors)};
}

std::vector<double> ExternalRefiner::refine(const RefinerInput& input) {
  const MeasurementShape s = input.b_prime.shape;
  const Tensor out = client_->request(FrameKind::refine, refine_request_tensors(input, scale_));
  out.expect_shape({static_cast<std::size_t>(s.pairs), static_cast<std::size_t>(s.nu),
                    static_cast<std::size_t>(s.nv)},
                   "external refiner");
  auto values = out.to_f64();
  for (double& v : values) v *= scale_;
  return values;
}

}  // namespace denois
