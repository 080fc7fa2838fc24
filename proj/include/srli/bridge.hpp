#pragma once

// Lockstep wire protocol for an external policy process. The server sends a
// handshake, then alternates: one observation frame per running
// environment, one action frame back for each, step, repeat.
//
// All integers and floats are little-endian. After the handshake every
// message is a u32 payload length followed by the payload, whose first byte
// is the message type.

#include "srli/runner.hpp"

#include <bit>
#include <cerrno>
#include <csignal>
#include <cstring>
#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

namespace srli {

inline constexpr std::array<char, 4> kBridgeMagic{'S', 'R', 'L', 'I'};
inline constexpr std::uint16_t kProtocolVersion = 1;
inline constexpr std::size_t kHandshakeSize = 4 + 2 + 4 + 8;

enum class MsgType : std::uint8_t { obs = 1, act = 2, bye = 3 };

// Tensor shapes carried by an observation frame.
struct FrameLayout {
  int state = 13;
  int prev_action = 4;
  int depth_width = 96;
  int depth_height = 54;
  int grid = kLocalGridSize;
  int reward_terms = 3;
  int action = 4;

  static FrameLayout of(const EpisodeConfig& c) {
    FrameLayout l;
    l.depth_width = c.camera.width;
    l.depth_height = c.camera.height;
    l.grid = c.local_grid_size;
    return l;
  }
  std::size_t pixels() const { return std::size_t(depth_width) * depth_height; }
  std::size_t cells() const { return std::size_t(grid) * grid * grid; }

  std::size_t obs_payload_size() const {
    return 1 + 3 * 4 + 4 * std::size_t(state + prev_action) + 4 * pixels() + cells() + 4 * cells() +
           4 * std::size_t(reward_terms) + 1;
  }
  std::size_t act_payload_size() const { return 1 + 4 + 4 * std::size_t(action); }

  // Canonical shape string; the layout hash is FNV-1a over it.
  std::string describe() const {
    std::ostringstream s;
    s << "obs:type:u8;env_id:u32;episode:u32;step:u32;state:" << state << ":f32;prev_action:" << prev_action
      << ":f32;masked_depth:" << depth_height << "x" << depth_width << ":f32;local_occ:" << grid << "x" << grid << "x"
      << grid << ":i8;local_svs:" << grid << "x" << grid << "x" << grid << ":f32;reward:" << reward_terms
      << ":f32;done:u8|act:type:u8;env_id:u32;action:" << action << ":f32";
    return s.str();
  }
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : describe()) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    return h;
  }
  bool operator==(const FrameLayout&) const = default;
};

struct Handshake {
  std::uint16_t version = kProtocolVersion;
  std::uint32_t env_count = 0;
  std::uint64_t layout_hash = 0;
  bool operator==(const Handshake&) const = default;
};

struct ObsFrame {
  std::uint32_t env_id = 0;
  std::uint32_t episode = 0;
  std::uint32_t step = 0;
  std::vector<float> state, prev_action, masked_depth;
  std::vector<std::int8_t> local_occ;
  std::vector<float> local_svs;
  std::array<float, 3> reward{};
  std::uint8_t done = 0;  // 0 running, 1 crash, 2 timeout
  bool operator==(const ObsFrame&) const = default;
};

struct ActFrame {
  std::uint32_t env_id = 0;
  std::array<float, 4> action{};
  bool operator==(const ActFrame&) const = default;
};

// ---- byte codec ------------------------------------------------------------

class ByteWriter {
 public:
  explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(out) {}
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void i8(std::int8_t v) { u8(static_cast<std::uint8_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t>& out_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}
  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::int8_t i8() { return static_cast<std::int8_t>(u8()); }
  std::size_t remaining() const { return n_ - pos_; }

 private:
  const std::uint8_t* take(std::size_t k) {
    if (k > remaining()) throw ProtocolError("truncated frame");
    const std::uint8_t* r = p_ + pos_;
    pos_ += k;
    return r;
  }
  std::uint64_t get(int n) {
    const std::uint8_t* b = take(n);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
  }
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> encode_handshake(const Handshake& h) {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.bytes(kBridgeMagic.data(), 4);
  w.u16(h.version);
  w.u32(h.env_count);
  w.u64(h.layout_hash);
  return out;
}

inline Handshake decode_handshake(const std::uint8_t* p, std::size_t n) {
  if (n != kHandshakeSize)
    throw ProtocolError("handshake must be " + std::to_string(kHandshakeSize) + " bytes, received " + std::to_string(n));
  if (std::memcmp(p, kBridgeMagic.data(), 4) != 0) throw ProtocolError("bad magic: expected \"SRLI\"");
  ByteReader r(p + 4, n - 4);
  Handshake h;
  h.version = r.u16();
  h.env_count = r.u32();
  h.layout_hash = r.u64();
  return h;
}

// Frames below are payloads (type byte first), without the length prefix.

inline std::vector<std::uint8_t> encode_obs_frame(const ObsFrame& f, const FrameLayout& l) {
  if (f.state.size() != std::size_t(l.state) || f.prev_action.size() != std::size_t(l.prev_action) ||
      f.masked_depth.size() != l.pixels() || f.local_occ.size() != l.cells() || f.local_svs.size() != l.cells())
    throw InvalidArgument("observation does not match the frame layout");
  std::vector<std::uint8_t> out;
  out.reserve(l.obs_payload_size());
  ByteWriter w(out);
  w.u8(static_cast<std::uint8_t>(MsgType::obs));
  w.u32(f.env_id);
  w.u32(f.episode);
  w.u32(f.step);
  for (float x : f.state) w.f32(x);
  for (float x : f.prev_action) w.f32(x);
  for (float x : f.masked_depth) w.f32(x);
  for (std::int8_t x : f.local_occ) w.i8(x);
  for (float x : f.local_svs) w.f32(x);
  for (float x : f.reward) w.f32(x);
  w.u8(f.done);
  return out;
}

inline void check_payload(MsgType type, std::size_t expected, std::size_t received) {
  if (expected != received)
    throw ProtocolError(std::string(type == MsgType::obs ? "observation" : "action") +
                        " frame payload length mismatch: expected " + std::to_string(expected) +
                        " bytes, received " + std::to_string(received));
}

inline ObsFrame decode_obs_frame(const std::uint8_t* p, std::size_t n, const FrameLayout& l) {
  check_payload(MsgType::obs, l.obs_payload_size(), n);
  ByteReader r(p, n);
  if (r.u8() != static_cast<std::uint8_t>(MsgType::obs)) throw ProtocolError("expected an observation frame");
  ObsFrame f;
  f.env_id = r.u32();
  f.episode = r.u32();
  f.step = r.u32();
  auto floats = [&](std::vector<float>& v, std::size_t k) {
    v.resize(k);
    for (auto& x : v) x = r.f32();
  };
  floats(f.state, l.state);
  floats(f.prev_action, l.prev_action);
  floats(f.masked_depth, l.pixels());
  f.local_occ.resize(l.cells());
  for (auto& x : f.local_occ) x = r.i8();
  floats(f.local_svs, l.cells());
  for (auto& x : f.reward) x = r.f32();
  f.done = r.u8();
  if (f.done > 2) throw ProtocolError("invalid done flag " + std::to_string(f.done));
  return f;
}

inline std::vector<std::uint8_t> encode_act_frame(const ActFrame& a) {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.u8(static_cast<std::uint8_t>(MsgType::act));
  w.u32(a.env_id);
  for (float x : a.action) w.f32(x);
  return out;
}

inline ActFrame decode_act_frame(const std::uint8_t* p, std::size_t n, const FrameLayout& l = {}) {
  check_payload(MsgType::act, l.act_payload_size(), n);
  ByteReader r(p, n);
  if (r.u8() != static_cast<std::uint8_t>(MsgType::act)) throw ProtocolError("expected an action frame");
  ActFrame a;
  a.env_id = r.u32();
  for (auto& x : a.action) x = r.f32();
  return a;
}

inline ObsFrame make_obs_frame(const Observation& o, std::uint32_t env_id, std::uint32_t episode,
                               std::uint32_t step, const RewardBreakdown& reward, Termination done) {
  ObsFrame f;
  f.env_id = env_id;
  f.episode = episode;
  f.step = step;
  f.state.assign(o.state.begin(), o.state.end());
  f.prev_action.assign(o.prev_action.begin(), o.prev_action.end());
  f.masked_depth = o.masked_depth;
  f.local_occ = o.local_occ;
  f.local_svs = o.local_svs;
  f.reward = {static_cast<float>(reward.f), static_cast<float>(reward.v), static_cast<float>(reward.p)};
  f.done = static_cast<std::uint8_t>(done);
  return f;
}

// ---- transport -------------------------------------------------------------

// Blocking byte stream over a pair of file descriptors, with a receive
// timeout. Does not own the descriptors unless told to.
class FdStream {
 public:
  FdStream(int in_fd, int out_fd, int timeout_ms = 30000, bool owns = false)
      : in_(in_fd), out_(out_fd), timeout_ms_(timeout_ms), owns_(owns) {}
  FdStream(const FdStream&) = delete;
  FdStream& operator=(const FdStream&) = delete;
  ~FdStream() { close(); }

  void close() {
    if (!owns_) return;
    if (in_ >= 0) ::close(in_);
    if (out_ >= 0 && out_ != in_) ::close(out_);
    in_ = out_ = -1;
    owns_ = false;
  }

  void write_all(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    while (n > 0) {
      ssize_t k = ::send(out_, p, n, MSG_NOSIGNAL);
      if (k < 0 && errno == ENOTSOCK) k = ::write(out_, p, n);
      if (k < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("write failed: ") + std::strerror(errno));
      }
      p += k;
      n -= std::size_t(k);
    }
  }

  // Returns false on a clean end of stream before any byte was read.
  bool read_exact(void* data, std::size_t n, const char* what) {
    auto* p = static_cast<std::uint8_t*>(data);
    std::size_t got = 0;
    while (got < n) {
      pollfd pfd{in_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, timeout_ms_);
      if (ready < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("poll failed: ") + std::strerror(errno));
      }
      if (ready == 0)
        throw ProtocolError(std::string("timed out after ") + std::to_string(timeout_ms_) + " ms waiting for " + what);
      const ssize_t k = ::read(in_, p + got, n - got);
      if (k < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("read failed: ") + std::strerror(errno));
      }
      if (k == 0) {
        if (got == 0) return false;
        throw ProtocolError(std::string("connection closed in the middle of ") + what);
      }
      got += std::size_t(k);
    }
    return true;
  }

  void send_frame(const std::vector<std::uint8_t>& payload) {
    std::vector<std::uint8_t> head;
    ByteWriter(head).u32(static_cast<std::uint32_t>(payload.size()));
    write_all(head.data(), head.size());
    write_all(payload.data(), payload.size());
  }

  // Reads one length-prefixed payload; nullopt on clean end of stream.
  std::optional<std::vector<std::uint8_t>> recv_frame(std::size_t max_size, const char* what) {
    std::uint8_t head[4];
    if (!read_exact(head, 4, what)) return std::nullopt;
    const std::uint32_t len = ByteReader(head, 4).u32();
    if (len == 0) throw ProtocolError("empty frame");
    if (len > max_size)
      throw ProtocolError("frame of " + std::to_string(len) + " bytes exceeds the " + std::to_string(max_size) +
                          "-byte limit");
    std::vector<std::uint8_t> buf(len);
    read_exact(buf.data(), len, what);
    return buf;
  }

  int timeout_ms() const { return timeout_ms_; }

 private:
  int in_, out_;
  int timeout_ms_;
  bool owns_;
};

// ---- server ------------------------------------------------------------------

struct ServeStats {
  std::uint64_t rounds = 0;
  std::uint64_t obs_frames = 0;
  std::uint64_t act_frames = 0;
  std::uint64_t episodes = 0;
  bool client_bye = false;
};

// Drives `bc.env_count` environments for `bc.episodes_per_env` episodes each
// against the client on `io`. Episode e of an environment uses obstacle count
// levels[e % levels.size()]. Every observation frame, terminal ones
// included, is answered by exactly one action frame; actions answering a
// terminal frame are ignored. Throws ProtocolError after sending a bye frame
// when the peer misbehaves.
inline ServeStats serve_session(FdStream& io, const BatchConfig& bc) {
  bc.validate();
  const FrameLayout layout = FrameLayout::of(bc.episode);
  const std::vector<int> levels = bc.levels();
  ServeStats stats;

  io.write_all(encode_handshake({kProtocolVersion, std::uint32_t(bc.env_count), layout.hash()}).data(), kHandshakeSize);
  std::array<std::uint8_t, kHandshakeSize> reply{};
  if (!io.read_exact(reply.data(), reply.size(), "handshake")) throw ProtocolError("client closed before handshake");
  const Handshake h = decode_handshake(reply.data(), reply.size());
  if (h.version != kProtocolVersion)
    throw ProtocolError("protocol version mismatch: server " + std::to_string(kProtocolVersion) + ", client " +
                        std::to_string(h.version));
  if (h.layout_hash != layout.hash()) {
    std::ostringstream m;
    m << "layout hash mismatch: server " << std::hex << layout.hash() << ", client " << h.layout_hash;
    throw ProtocolError(m.str());
  }
  if (h.env_count != std::uint32_t(bc.env_count))
    throw ProtocolError("env_count mismatch: server " + std::to_string(bc.env_count) + ", client " +
                        std::to_string(h.env_count));

  struct Slot {
    std::unique_ptr<Env> env;
    int episode = -1;
    bool needs_reset = true;
    bool retired = false;
    Observation obs;
    RewardBreakdown reward;
  };
  std::vector<Slot> slots(bc.env_count);
  for (int i = 0; i < bc.env_count; ++i) slots[i].env = std::make_unique<Env>(bc.episode);

  const std::vector<std::uint8_t> bye{static_cast<std::uint8_t>(MsgType::bye)};
  try {
    for (;;) {
      std::vector<int> active;
      for (int i = 0; i < bc.env_count; ++i) {
        Slot& s = slots[i];
        if (s.retired) continue;
        if (s.needs_reset) {
          if (s.episode + 1 >= bc.episodes_per_env) {
            s.retired = true;
            continue;
          }
          ++s.episode;
          const int obstacles = levels[s.episode % levels.size()];
          EpisodeConfig ec = bc.episode;
          ec.room.obstacle_count = obstacles;
          if (ec.room.obstacle_count != s.env->config().room.obstacle_count) s.env = std::make_unique<Env>(ec);
          s.obs = s.env->reset(episode_seed(bc.master_seed, obstacles, i, s.episode));
          s.reward = {};
          s.needs_reset = false;
        }
        active.push_back(i);
      }
      if (active.empty()) break;

      for (int i : active) {
        const Slot& s = slots[i];
        io.send_frame(encode_obs_frame(make_obs_frame(s.obs, i, s.episode, s.env->step_count(), s.reward,
                                                      s.env->termination()),
                                       layout));
        ++stats.obs_frames;
      }
      std::vector<std::optional<Action>> actions(bc.env_count);
      std::size_t pending = active.size();
      std::vector<std::uint8_t> expected(bc.env_count, 0);
      for (int i : active) expected[i] = 1;
      while (pending > 0) {
        auto frame = io.recv_frame(layout.obs_payload_size(), "action frames");
        if (!frame) throw ProtocolError("client disconnected with " + std::to_string(pending) + " actions outstanding");
        if ((*frame)[0] == static_cast<std::uint8_t>(MsgType::bye)) {
          stats.client_bye = true;
          io.send_frame(bye);
          return stats;
        }
        const ActFrame a = decode_act_frame(frame->data(), frame->size(), layout);
        if (a.env_id >= std::uint32_t(bc.env_count) || !expected[a.env_id])
          throw ProtocolError("unexpected action for env " + std::to_string(a.env_id));
        expected[a.env_id] = 0;
        Action act;
        for (int k = 0; k < 4; ++k) act[k] = std::isnan(a.action[k]) ? 0.0 : std::clamp(double(a.action[k]), -1.0, 1.0);
        actions[a.env_id] = act;
        --pending;
        ++stats.act_frames;
      }
      for (int i : active) {
        Slot& s = slots[i];
        if (s.env->termination() != Termination::running) {
          s.needs_reset = true;
          ++stats.episodes;
          continue;
        }
        StepResult r = s.env->step(*actions[i]);
        s.obs = std::move(r.observation);
        s.reward = r.reward;
      }
      ++stats.rounds;
    }
    io.send_frame(bye);
  } catch (const ProtocolError&) {
    try {
      io.send_frame(bye);
    } catch (...) {
    }
    throw;
  }
  return stats;
}

// Endpoint syntax: "stdio" or "unix:/path/to/socket" (listens, serves one
// connection, removes the socket file).
inline ServeStats serve(const std::string& endpoint, const BatchConfig& bc, int timeout_ms = 30000) {
  if (endpoint == "stdio") {
    FdStream io(STDIN_FILENO, STDOUT_FILENO, timeout_ms);
    return serve_session(io, bc);
  }
  if (endpoint.rfind("unix:", 0) != 0) throw InvalidArgument("endpoint must be 'stdio' or 'unix:<path>'");
  const std::string path = endpoint.substr(5);
  sockaddr_un addr{};
  if (path.empty() || path.size() >= sizeof addr.sun_path) throw InvalidArgument("bad unix socket path '" + path + "'");
  addr.sun_family = AF_UNIX;
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  const int lfd = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (lfd < 0) throw IoError(path, std::strerror(errno));
  ::unlink(path.c_str());
  if (::bind(lfd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(lfd, 1) < 0) {
    const std::string err = std::strerror(errno);
    ::close(lfd);
    throw IoError(path, err);
  }
  pollfd pfd{lfd, POLLIN, 0};
  const int ready = ::poll(&pfd, 1, timeout_ms);
  const int cfd = ready > 0 ? ::accept(lfd, nullptr, nullptr) : -1;
  ::close(lfd);
  ::unlink(path.c_str());
  if (cfd < 0) throw ProtocolError("no client connected to " + path + " within " + std::to_string(timeout_ms) + " ms");
  FdStream io(cfd, cfd, timeout_ms, true);
  return serve_session(io, bc);
}

// ---- client side ---------------------------------------------------------------

// Minimal in-process client, used by tests and as a reference for other
// languages.
class BridgeClient {
 public:
  BridgeClient(int in_fd, int out_fd, FrameLayout layout, int timeout_ms = 30000)
      : io_(in_fd, out_fd, timeout_ms), layout_(layout) {}

  Handshake connect() {
    std::array<std::uint8_t, kHandshakeSize> buf{};
    if (!io_.read_exact(buf.data(), buf.size(), "handshake")) throw ProtocolError("server closed before handshake");
    const Handshake h = decode_handshake(buf.data(), buf.size());
    if (h.layout_hash != layout_.hash()) {
      std::ostringstream m;
      m << "layout hash mismatch: server " << std::hex << h.layout_hash << ", client " << layout_.hash();
      throw ProtocolError(m.str());
    }
    io_.write_all(encode_handshake({kProtocolVersion, h.env_count, layout_.hash()}).data(), kHandshakeSize);
    return h;
  }

  // Next observation, or nullopt once the server says bye.
  std::optional<ObsFrame> next() {
    auto f = io_.recv_frame(layout_.obs_payload_size(), "observation frame");
    if (!f || (*f)[0] == static_cast<std::uint8_t>(MsgType::bye)) return std::nullopt;
    return decode_obs_frame(f->data(), f->size(), layout_);
  }

  void act(const ActFrame& a) { io_.send_frame(encode_act_frame(a)); }
  void bye() { io_.send_frame({static_cast<std::uint8_t>(MsgType::bye)}); }
  FdStream& stream() { return io_; }

 private:
  FdStream io_;
  FrameLayout layout_;
};

}  // namespace srli
