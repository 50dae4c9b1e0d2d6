#include "spc/toydenoiser.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>

#include "spc/error.hpp"
#include "spc/optim.hpp"

namespace spc {

namespace {

  enum Slot
  {
    kWIn, kBIn, kWTime, kBTime, kWSeed, kBSeed, kWOff,
    kW1, kB1, kW2, kB2, kW3, kB3, kNumSlots
  };

  constexpr uint32_t kCheckpointVersion = 1;
  constexpr char kCheckpointMagic[4] = {'S', 'P', 'T', 'D'};

  Mat
  xavier(size_t in, size_t out, Rng& rng)
  {
    double a = std::sqrt(6.0 / double(in + out));
    std::uniform_real_distribution<double> u(-a, a);
    Mat m(in, out);
    for (auto& v : m.data)
      v = u(rng);
    return m;
  }

}  // namespace

ToyDenoiserParams
ToyDenoiserParams::random_init(size_t hidden, Rng& rng)
{
  if (hidden < 2 || hidden % 2)
    throw Error(Errc::kInvalidArgument, "hidden width must be even and >= 2");
  const size_t h = hidden;
  ToyDenoiserParams p;
  p.hidden = h;
  p.tensors.resize(kNumSlots);
  p.tensors[kWIn] = xavier(6, h, rng);
  p.tensors[kBIn] = Mat(1, h);
  p.tensors[kWTime] = xavier(h, h, rng);
  p.tensors[kBTime] = Mat(1, h);
  p.tensors[kWSeed] = xavier(6, h, rng);
  p.tensors[kBSeed] = Mat(1, h);
  p.tensors[kWOff] = xavier(6, h, rng);
  p.tensors[kW1] = xavier(h, h, rng);
  p.tensors[kB1] = Mat(1, h);
  p.tensors[kW2] = xavier(h, h, rng);
  p.tensors[kB2] = Mat(1, h);
  p.tensors[kW3] = xavier(h, 6, rng);
  p.tensors[kB3] = Mat(1, 6);
  return p;
}

size_t
ToyDenoiserParams::count() const
{
  size_t n = 0;
  for (const auto& t : tensors)
    n += t.size();
  return n;
}

//----------------------------------------------------------------------------

ad::Var
toy_forward(
  ad::Tape& tape, const std::vector<ad::Var>& p, ad::Var x_t, ad::Var cond,
  int t, const NoiseSchedule& s)
{
  if (p.size() != kNumSlots)
    throw Error(Errc::kInvalidArgument, "toy denoiser: wrong parameter count");
  if (x_t.cols() != 6 || cond.cols() != 6 || x_t.rows() == 0 || cond.rows() == 0)
    throw Error(Errc::kInvalidArgument, "toy denoiser expects M x 6 and K x 6");
  if (t < 1 || t > s.T)
    throw Error(Errc::kInvalidArgument, "diffusion step out of range");

  const size_t M = x_t.rows();
  const size_t K = cond.rows();
  const size_t hidden = p[kWIn].cols();
  const double in_scale = 1.0 / std::sqrt(1.0 - s.alpha_bar[size_t(t)]);

  // m nearest seeds plus one more to define the weight cutoff.
  const size_t m = std::min(kToyNeighbors, K);
  const bool cutoff = K > m;
  const size_t q = cutoff ? m + 1 : m;
  std::vector<int> nn = tape.select([&] {
    KdIndex index(cond.value());
    std::vector<int> out(M * q);
    for (size_t i = 0; i < M; ++i) {
      auto nbs = index.knn(x_t.value().row(i), q);
      for (size_t j = 0; j < q; ++j)
        out[i * q + j] = nbs[j].row;
    }
    return out;
  });
  auto column = [&](size_t j) {
    std::vector<int> c(M);
    for (size_t i = 0; i < M; ++i)
      c[i] = nn[i * q + j];
    return c;
  };

  constexpr double kDelta = 1e-3;
  ad::Var ones = tape.constant(Mat(M, 1, 1.0));
  std::vector<ad::Var> diff(q), inv(q);
  for (size_t j = 0; j < q; ++j) {
    auto cj = column(j);
    diff[j] = x_t - ad::gather_rows(cond, cj);
    inv[j] = ones / ad::add_scalar(ad::row_norm(diff[j]), kDelta);
  }
  std::vector<ad::Var> w(m);
  ad::Var wsum;
  for (size_t j = 0; j < m; ++j) {
    w[j] = cutoff ? ad::add_scalar(inv[j] - inv[m], 1e-12) : inv[j];
    wsum = j == 0 ? w[j] : wsum + w[j];
  }

  ad::Var seed_feat =
    ad::relu(ad::add_row(ad::matmul(cond, p[kWSeed]), p[kBSeed]));
  ad::Var ctx, off;
  for (size_t j = 0; j < m; ++j) {
    ad::Var a = w[j] / wsum;
    auto cj = column(j);
    ad::Var cj_feat = ad::mul_col(ad::gather_rows(seed_feat, cj), a);
    ad::Var cj_off = ad::mul_col(diff[j], a);
    ctx = j == 0 ? cj_feat : ctx + cj_feat;
    off = j == 0 ? cj_off : off + cj_off;
  }
  off = ad::scale(off, in_scale);

  ad::Var temb = ad::sinusoidal_embedding(tape.constant(Mat(1, 1, double(t))), hidden);
  ad::Var e = ad::add_row(ad::matmul(temb, p[kWTime]), p[kBTime]);

  ad::Var fx = ad::add_row(ad::matmul(x_t, p[kWIn]), p[kBIn]);
  ad::Var h0 = ad::relu(ad::add_row(fx + ctx + ad::matmul(off, p[kWOff]), e));
  ad::Var h1 = ad::relu(ad::add_row(ad::matmul(h0, p[kW1]), p[kB1]));
  ad::Var h2 = ad::relu(ad::add_row(ad::matmul(h1, p[kW2]), p[kB2]));
  return ad::add_row(ad::matmul(h2, p[kW3]), p[kB3]);
}

ToyDenoiser::ToyDenoiser(ToyDenoiserParams params, NoiseSchedule schedule)
  : params_(std::move(params)), schedule_(std::move(schedule))
{
  if (params_.tensors.size() != kNumSlots)
    throw Error(Errc::kInvalidArgument, "toy denoiser: wrong parameter count");
}

ad::Var
ToyDenoiser::eps(ad::Tape& tape, ad::Var x_t, ad::Var cond, int t) const
{
  std::vector<ad::Var> p;
  p.reserve(params_.tensors.size());
  for (const auto& m : params_.tensors)
    p.push_back(tape.constant(m));
  return toy_forward(tape, p, x_t, cond, t, schedule_);
}

//----------------------------------------------------------------------------

namespace {

  void
  put_u32(std::string& s, uint32_t v)
  {
    for (int i = 0; i < 4; ++i)
      s.push_back(char((v >> (8 * i)) & 0xff));
  }

  uint32_t
  get_u32(std::istream& in)
  {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
      throw Error(Errc::kDecodeError, "truncated checkpoint");
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
      uint32_t(b[3]) << 24;
  }

}  // namespace

void
write_checkpoint(const Checkpoint& ckpt, std::ostream& out)
{
  std::string s(kCheckpointMagic, 4);
  put_u32(s, kCheckpointVersion);
  put_u32(s, uint32_t(ckpt.params.hidden));
  put_u32(s, uint32_t(ckpt.steps));
  put_u32(s, uint32_t(ckpt.schedule));
  put_u32(s, uint32_t(ckpt.params.tensors.size()));
  for (const auto& t : ckpt.params.tensors) {
    put_u32(s, uint32_t(t.rows));
    put_u32(s, uint32_t(t.cols));
  }
  for (const auto& t : ckpt.params.tensors)
    for (double v : t.data)
      put_u32(s, std::bit_cast<uint32_t>(float(v)));
  out.write(s.data(), std::streamsize(s.size()));
}

Checkpoint
read_checkpoint(std::istream& in)
{
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw Error(Errc::kUnsupportedStream, "not a toy denoiser checkpoint");
  if (get_u32(in) != kCheckpointVersion)
    throw Error(Errc::kUnsupportedStream, "unsupported checkpoint version");
  Checkpoint c;
  c.params.hidden = get_u32(in);
  c.steps = int(get_u32(in));
  uint32_t kind = get_u32(in);
  if (kind > uint32_t(ScheduleKind::kConstant))
    throw Error(Errc::kDecodeError, "bad schedule kind in checkpoint");
  c.schedule = ScheduleKind(kind);
  uint32_t n = get_u32(in);
  if (n != kNumSlots)
    throw Error(Errc::kDecodeError, "unexpected tensor count in checkpoint");
  for (uint32_t i = 0; i < n; ++i) {
    uint32_t r = get_u32(in), cl = get_u32(in);
    if (size_t(r) * cl > (size_t(1) << 24))
      throw Error(Errc::kDecodeError, "tensor too large in checkpoint");
    c.params.tensors.emplace_back(r, cl);
  }
  for (auto& t : c.params.tensors)
    for (auto& v : t.data)
      v = double(std::bit_cast<float>(get_u32(in)));
  return c;
}

void
save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error(Errc::kIoError, "cannot write " + path.string());
  write_checkpoint(ckpt, out);
}

Checkpoint
load_checkpoint(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(Errc::kIoError, "cannot open " + path.string());
  return read_checkpoint(in);
}

//----------------------------------------------------------------------------

TrainResult
train_toy_denoiser(
  const TrainConfig& cfg, const std::function<void(int, double)>& on_step)
{
  if (cfg.steps < 0 || cfg.batch < 1 || cfg.seeds < 1 || cfg.shapes.empty())
    throw Error(Errc::kInvalidArgument, "invalid training configuration");
  if (!(cfg.lr >= 0))
    throw Error(Errc::kInvalidArgument, "learning rate must be >= 0");

  Rng rng = make_rng(cfg.seed, 0);
  const NoiseSchedule sched = make_schedule(cfg.T, cfg.schedule);

  TrainResult res;
  res.checkpoint.steps = cfg.T;
  res.checkpoint.schedule = cfg.schedule.kind;
  ToyDenoiserParams& params = res.checkpoint.params;
  params = ToyDenoiserParams::random_init(cfg.hidden, rng);
  std::vector<AdamState> adam(params.tensors.size());

  std::uniform_real_distribution<double> size_dist(0.5, 1.0);
  for (int step = 0; step < cfg.steps; ++step) {
    ShapeSpec spec;
    spec.kind = cfg.shapes[size_t(uniform_int(rng, 0, int(cfg.shapes.size()) - 1))];
    spec.size = size_dist(rng);
    spec.coloring = uniform_int(rng, 0, 1) ? Coloring::kChecker : Coloring::kGradient;
    Mat x0 = synth_shape(spec, cfg.batch, rng).rows6();
    Mat cond = synth_shape(spec, cfg.seeds, rng).rows6();
    int t = uniform_int(rng, 1, cfg.T);
    Mat eps = normal_matrix(rng, cfg.batch, 6);
    Mat x_t = add_noise(x0, t, eps, sched);

    ad::Tape tape;
    std::vector<ad::Var> p;
    for (const auto& m : params.tensors)
      p.push_back(tape.input(m));
    ad::Var pred = toy_forward(tape, p, tape.constant(x_t), tape.constant(cond), t, sched);
    ad::Var err = pred - tape.constant(eps);
    ad::Var loss = ad::mean(err * err);
    double lv = loss.value()(0, 0);
    if (!std::isfinite(lv) || lv > 1e6)
      throw Error(
        Errc::kNumericError,
        "toy denoiser training diverged at step " + std::to_string(step) +
          " (loss " + std::to_string(lv) + ")");
    tape.backward(loss);
    for (size_t i = 0; i < p.size(); ++i)
      adam_step(params.tensors[i], adam[i], tape.grad(p[i]), cfg.lr);
    res.loss.push_back(lv);
    if (on_step)
      on_step(step, lv);
  }
  return res;
}

std::vector<double>
smooth(const std::vector<double>& v, double alpha)
{
  std::vector<double> out;
  out.reserve(v.size());
  double acc = 0;
  for (size_t i = 0; i < v.size(); ++i) {
    acc = i == 0 ? v[i] : (1 - alpha) * acc + alpha * v[i];
    out.push_back(acc);
  }
  return out;
}

void
write_loss_csv(const std::vector<double>& loss, std::ostream& out)
{
  out << "step,loss\n";
  out.precision(10);
  for (size_t i = 0; i < loss.size(); ++i)
    out << i << ',' << loss[i] << '\n';
}

}  // namespace spc
