#include "areapo/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "areapo/errors.hpp"

namespace areapo {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr std::array<char, 8> kMagic{'A', 'R', 'E', 'A', 'P', 'O', 'C', 'K'};
constexpr std::uint32_t kHasCritic = 1u << 0;
constexpr std::uint32_t kHasOptimizer = 1u << 1;
constexpr std::uint32_t kTanhSquash = 1u << 2;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void doubles(const double* data, std::size_t n) {
    out_.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
  }
  void vector(const Eigen::VectorXd& v) {
    pod<std::uint64_t>(static_cast<std::uint64_t>(v.size()));
    doubles(v.data(), static_cast<std::size_t>(v.size()));
  }
  void mlp(const nn::Mlp<double>& net) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(net.sizes().size()));
    for (int s : net.sizes()) pod<std::int32_t>(s);
    vector(net.flatten());
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in_) throw CheckpointError("checkpoint truncated");
    return v;
  }
  Eigen::VectorXd vector(std::uint64_t max_size = 1ull << 28) {
    const auto n = pod<std::uint64_t>();
    if (n > max_size) throw CheckpointError("checkpoint vector size out of range");
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in_) throw CheckpointError("checkpoint truncated");
    return v;
  }
  nn::Mlp<double> mlp() {
    const auto n = pod<std::uint32_t>();
    if (n < 2 || n > 64) throw CheckpointError("checkpoint network depth out of range");
    std::vector<int> sizes;
    for (std::uint32_t i = 0; i < n; ++i) {
      const auto s = pod<std::int32_t>();
      if (s < 1 || s > (1 << 16)) throw CheckpointError("checkpoint layer size out of range");
      sizes.push_back(s);
    }
    nn::Mlp<double> net(sizes);
    const Eigen::VectorXd flat = vector();
    if (flat.size() != net.parameter_count()) throw CheckpointError("checkpoint network parameter count mismatch");
    net.assign(flat);
    return net;
  }

 private:
  std::istream& in_;
};

}  // namespace

Checkpoint Checkpoint::policy_only() const {
  Checkpoint c = *this;
  c.critic.reset();
  c.optimizer.reset();
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  Writer w(out);
  out.write(kMagic.data(), kMagic.size());
  w.pod<std::uint32_t>(kCheckpointVersion);
  std::uint32_t flags = 0;
  if (ckpt.critic) flags |= kHasCritic;
  if (ckpt.optimizer) flags |= kHasOptimizer;
  if (ckpt.policy.squash == nn::Squash::Tanh) flags |= kTanhSquash;
  w.pod<std::uint32_t>(flags);
  w.pod<std::uint8_t>(ckpt.task == Actuation::Acrobot ? 0 : 1);
  w.pod<std::int64_t>(ckpt.iteration);
  w.pod<std::int64_t>(ckpt.frames);
  w.pod<double>(ckpt.gains.rho);
  w.pod<double>(ckpt.gains.rho_entropy);
  w.pod<double>(ckpt.obs_stats.count);
  w.doubles(ckpt.obs_stats.mean.data(), 4);
  w.doubles(ckpt.obs_stats.m2.data(), 4);
  w.mlp(ckpt.policy.mean_net);
  w.pod<double>(ckpt.policy.log_std);
  if (ckpt.critic) w.mlp(ckpt.critic->net);
  if (ckpt.optimizer) {
    const auto& o = *ckpt.optimizer;
    w.pod<double>(o.config.learning_rate);
    w.pod<double>(o.config.beta1);
    w.pod<double>(o.config.beta2);
    w.pod<double>(o.config.epsilon);
    w.pod<std::int64_t>(o.step);
    w.vector(o.m);
    w.vector(o.v);
  }
  if (!out) throw CheckpointError("failed to write checkpoint");
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + path + "' for writing");
  save_checkpoint(ckpt, out);
}

Checkpoint load_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw CheckpointError("not a checkpoint file (bad magic)");
  Reader r(in);
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  const auto flags = r.pod<std::uint32_t>();
  if (flags & ~(kHasCritic | kHasOptimizer | kTanhSquash)) throw CheckpointError("unknown checkpoint flags");
  Checkpoint c;
  const auto task = r.pod<std::uint8_t>();
  if (task > 1) throw CheckpointError("invalid task tag in checkpoint");
  c.task = task == 0 ? Actuation::Acrobot : Actuation::Pendubot;
  c.iteration = r.pod<std::int64_t>();
  c.frames = r.pod<std::int64_t>();
  c.gains.rho = r.pod<double>();
  c.gains.rho_entropy = r.pod<double>();
  c.obs_stats.count = r.pod<double>();
  for (int i = 0; i < 4; ++i) c.obs_stats.mean(i) = r.pod<double>();
  for (int i = 0; i < 4; ++i) c.obs_stats.m2(i) = r.pod<double>();
  c.policy.mean_net = r.mlp();
  if (c.policy.mean_net.output_size() != 1 || c.policy.mean_net.input_size() != 4)
    throw CheckpointError("policy network must map 4 inputs to 1 output");
  c.policy.log_std = r.pod<double>();
  c.policy.squash = (flags & kTanhSquash) ? nn::Squash::Tanh : nn::Squash::Clamp;
  if (flags & kHasCritic) {
    c.critic = nn::Critic{r.mlp()};
    if (c.critic->net.output_size() != 2 || c.critic->net.input_size() != 4)
      throw CheckpointError("critic network must map 4 inputs to 2 outputs");
  }
  if (flags & kHasOptimizer) {
    nn::OptimizerState o;
    o.config.learning_rate = r.pod<double>();
    o.config.beta1 = r.pod<double>();
    o.config.beta2 = r.pod<double>();
    o.config.epsilon = r.pod<double>();
    o.step = r.pod<std::int64_t>();
    o.m = r.vector();
    o.v = r.vector();
    if (o.m.size() != o.v.size()) throw CheckpointError("optimizer moment shapes differ");
    const Eigen::Index expected =
        c.policy.parameter_count() + (c.critic ? c.critic->parameter_count() : Eigen::Index(0));
    if (o.m.size() != expected) throw CheckpointError("optimizer moments do not match parameter count");
    c.optimizer = std::move(o);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes after checkpoint");
  return c;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace areapo
