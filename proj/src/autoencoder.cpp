#include "flowguard/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace flowguard {

using Eigen::ArrayXXd;
using Eigen::Index;
using Eigen::Map;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace detail {

struct LstmSlot {
  Index wx = 0, wh = 0, b = 0;
  int in = 0, hidden = 0;
};

struct Layout {
  std::vector<LstmSlot> lstm;  // encoder layers, then decoder layers
  Index wo = 0, bo = 0;
  int outIn = 0, outWidth = 0;
  Index total = 0;
};

Layout make_layout(const Architecture& arch) {
  Layout l;
  Index offset = 0;
  auto add = [&](int in, int hidden) {
    LstmSlot s;
    s.in = in;
    s.hidden = hidden;
    s.wx = offset;
    offset += Index{4} * hidden * in;
    s.wh = offset;
    offset += Index{4} * hidden * hidden;
    s.b = offset;
    offset += Index{4} * hidden;
    l.lstm.push_back(s);
  };
  int in = arch.inputWidth;
  for (int w : arch.encoderWidths) {
    add(in, w);
    in = w;
  }
  for (int w : arch.decoderWidths()) {
    add(in, w);
    in = w;
  }
  l.outIn = in;
  l.outWidth = arch.inputWidth;
  l.wo = offset;
  offset += Index{l.outWidth} * in;
  l.bo = offset;
  offset += l.outWidth;
  l.total = offset;
  return l;
}

struct LayerTrace {
  MatrixXd input;     // in x TB
  MatrixXd gates;     // 4H x TB, activated (i, f, g, o)
  MatrixXd cell;      // H x TB
  MatrixXd actCell;   // H x TB, activated cell state
  MatrixXd hidden;    // H x TB
};

}  // namespace detail

using namespace detail;

struct SequenceAutoencoder::Trace {
  Layout layout;
  std::vector<LayerTrace> layers;
  MatrixXd output;  // F x TB
  int T = 0, B = 0;
};

namespace {

template <typename Block>
void sigmoid_inplace(Block&& block) {
  block = (1.0 + (-block.array()).exp()).inverse().matrix();
}

// The logistic map rounds to exactly 0 or 1 in double precision once the
// pre-activation passes roughly -745 or +37; keep outputs strictly inside.
template <typename Block>
void bounded_sigmoid_inplace(Block&& block) {
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  sigmoid_inplace(block);
  block = block.cwiseMax(lo).cwiseMin(hi);
}

template <typename Block>
void activate_inplace(Block&& block, CellActivation act) {
  if (act == CellActivation::Relu)
    block = block.cwiseMax(0.0);
  else
    block = block.array().tanh().matrix();
}

// Derivative expressed through the activated value.
template <typename A>
ArrayXXd activation_slope(const A& activated, CellActivation act) {
  if (act == CellActivation::Relu) return (activated > 0.0).template cast<double>();
  return 1.0 - activated.square();
}

void lstm_forward(const double* p, const LstmSlot& s, MatrixXd input, int T, int B,
                  CellActivation act, LayerTrace& tr) {
  const int H = s.hidden;
  Map<const MatrixXd> Wx(p + s.wx, 4 * H, s.in);
  Map<const MatrixXd> Wh(p + s.wh, 4 * H, H);
  Map<const VectorXd> b(p + s.b, 4 * H);

  tr.input = std::move(input);
  tr.gates.noalias() = Wx * tr.input;
  tr.gates.colwise() += b;
  tr.cell.resize(H, Index{T} * B);
  tr.actCell.resize(H, Index{T} * B);
  tr.hidden.resize(H, Index{T} * B);

  for (int t = 0; t < T; ++t) {
    auto z = tr.gates.middleCols(Index{t} * B, B);
    if (t > 0) z.noalias() += Wh * tr.hidden.middleCols(Index{t - 1} * B, B);
    sigmoid_inplace(z.topRows(2 * H));
    activate_inplace(z.middleRows(2 * H, H), act);
    sigmoid_inplace(z.bottomRows(H));

    auto c = tr.cell.middleCols(Index{t} * B, B);
    c = z.topRows(H).cwiseProduct(z.middleRows(2 * H, H));
    if (t > 0) c += z.middleRows(H, H).cwiseProduct(tr.cell.middleCols(Index{t - 1} * B, B));
    auto tc = tr.actCell.middleCols(Index{t} * B, B);
    tc = c;
    activate_inplace(tc, act);
    tr.hidden.middleCols(Index{t} * B, B) = z.bottomRows(H).cwiseProduct(tc);
  }
}

// Accumulates parameter gradients into `g`; returns d(loss)/d(input) when
// `needInput` is set.
MatrixXd lstm_backward(const double* p, double* g, const LstmSlot& s, const LayerTrace& tr,
                       const MatrixXd& dHidden, int T, int B, CellActivation act, bool needInput) {
  const int H = s.hidden;
  Map<const MatrixXd> Wx(p + s.wx, 4 * H, s.in);
  Map<const MatrixXd> Wh(p + s.wh, 4 * H, H);
  Map<MatrixXd> gWx(g + s.wx, 4 * H, s.in);
  Map<MatrixXd> gWh(g + s.wh, 4 * H, H);
  Map<VectorXd> gb(g + s.b, 4 * H);

  MatrixXd dZ(4 * H, Index{T} * B);
  MatrixXd dhNext = MatrixXd::Zero(H, B);
  ArrayXXd dcNext = ArrayXXd::Zero(H, B);

  for (int t = T - 1; t >= 0; --t) {
    const Index col = Index{t} * B;
    const auto gates = tr.gates.middleCols(col, B).array();
    const auto i = gates.topRows(H);
    const auto f = gates.middleRows(H, H);
    const auto gg = gates.middleRows(2 * H, H);
    const auto o = gates.bottomRows(H);
    const auto tc = tr.actCell.middleCols(col, B).array();

    const ArrayXXd dh = dHidden.middleCols(col, B).array() + dhNext.array();
    const ArrayXXd dc = dcNext + dh * o * activation_slope(tc, act);

    auto dz = dZ.middleCols(col, B);
    dz.topRows(H) = (dc * gg * i * (1.0 - i)).matrix();
    if (t > 0)
      dz.middleRows(H, H) =
          (dc * tr.cell.middleCols(col - B, B).array() * f * (1.0 - f)).matrix();
    else
      dz.middleRows(H, H).setZero();
    dz.middleRows(2 * H, H) = (dc * i * activation_slope(gg, act)).matrix();
    dz.bottomRows(H) = (dh * tc * o * (1.0 - o)).matrix();

    dcNext = dc * f;
    if (t > 0) dhNext.noalias() = Wh.transpose() * dz;
  }

  gWx.noalias() += dZ * tr.input.transpose();
  if (T > 1) {
    const Index rest = Index{T - 1} * B;
    gWh.noalias() += dZ.rightCols(rest) * tr.hidden.leftCols(rest).transpose();
  }
  gb += dZ.rowwise().sum();

  if (!needInput) return {};
  return Wx.transpose() * dZ;
}

std::uint64_t fnv1a_bytes(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t k = 0; k < size; ++k) {
    h ^= bytes[k];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Index Architecture::parameter_count() const { return make_layout(*this).total; }

void Architecture::validate() const {
  if (inputWidth <= 0) throw std::invalid_argument("architecture: input width must be positive");
  if (windowSize <= 0) throw std::invalid_argument("architecture: window size must be positive");
  if (encoderWidths.empty()) throw std::invalid_argument("architecture: no encoder layers");
  for (int w : encoderWidths)
    if (w <= 0) throw std::invalid_argument("architecture: layer widths must be positive");
}

SequenceBatch SequenceBatch::pack(std::span<const WindowedSequence* const> windows) {
  if (windows.empty()) throw std::invalid_argument("SequenceBatch: no windows");
  SequenceBatch b;
  b.windowSize = windows.front()->size();
  b.batch = static_cast<int>(windows.size());
  const Index F = windows.front()->window.cols();
  b.values.resize(F, Index{b.windowSize} * b.batch);
  for (int k = 0; k < b.batch; ++k) {
    const auto& w = windows[static_cast<std::size_t>(k)]->window;
    if (w.rows() != b.windowSize || w.cols() != F)
      throw std::invalid_argument("SequenceBatch: windows differ in shape");
    for (int t = 0; t < b.windowSize; ++t) b.values.col(Index{t} * b.batch + k) = w.row(t).transpose();
  }
  return b;
}

SequenceBatch SequenceBatch::pack(std::span<const WindowedSequence> windows) {
  std::vector<const WindowedSequence*> ptrs;
  ptrs.reserve(windows.size());
  for (const auto& w : windows) ptrs.push_back(&w);
  return pack(std::span<const WindowedSequence* const>(ptrs));
}

SequenceAutoencoder::SequenceAutoencoder(Architecture arch, VectorXd params)
    : arch_(std::move(arch)), params_(std::move(params)) {
  arch_.validate();
  if (params_.size() != arch_.parameter_count())
    throw std::invalid_argument("SequenceAutoencoder: parameter count does not match architecture");
}

SequenceAutoencoder SequenceAutoencoder::initialize(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  const Layout l = make_layout(arch);
  VectorXd p = VectorXd::Zero(l.total);
  std::mt19937_64 gen(seed);
  auto fill = [&](Index offset, Index count, double fanIn, double fanOut) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double limit = std::sqrt(6.0 / (fanIn + fanOut));
    for (Index k = 0; k < count; ++k) p[offset + k] = limit * u(gen);
  };
  for (const auto& s : l.lstm) {
    fill(s.wx, Index{4} * s.hidden * s.in, s.in, 4.0 * s.hidden);
    fill(s.wh, Index{4} * s.hidden * s.hidden, s.hidden, 4.0 * s.hidden);
  }
  fill(l.wo, Index{l.outWidth} * l.outIn, l.outIn, l.outWidth);
  return SequenceAutoencoder(arch, std::move(p));
}

void SequenceAutoencoder::forward(const SequenceBatch& batch, Trace& trace) const {
  if (batch.windowSize != arch_.windowSize)
    throw std::invalid_argument("window size does not match the autoencoder");
  if (batch.values.rows() != arch_.inputWidth)
    throw std::invalid_argument("feature width does not match the autoencoder");
  if (!batch.values.allFinite()) throw std::invalid_argument("non-finite input");

  const int T = batch.windowSize;
  const int B = batch.batch;
  trace.layout = make_layout(arch_);
  trace.T = T;
  trace.B = B;
  const auto& l = trace.layout;
  const double* p = params_.data();
  const std::size_t E = arch_.encoderWidths.size();
  trace.layers.resize(l.lstm.size());

  lstm_forward(p, l.lstm[0], batch.values, T, B, arch_.activation, trace.layers[0]);
  for (std::size_t k = 1; k < E; ++k)
    lstm_forward(p, l.lstm[k], trace.layers[k - 1].hidden, T, B, arch_.activation, trace.layers[k]);

  const auto& encoded = trace.layers[E - 1].hidden;
  MatrixXd repeated(encoded.rows(), Index{T} * B);
  for (int t = 0; t < T; ++t) repeated.middleCols(Index{t} * B, B) = encoded.rightCols(B);

  lstm_forward(p, l.lstm[E], std::move(repeated), T, B, arch_.activation, trace.layers[E]);
  for (std::size_t k = E + 1; k < l.lstm.size(); ++k)
    lstm_forward(p, l.lstm[k], trace.layers[k - 1].hidden, T, B, arch_.activation, trace.layers[k]);

  Map<const MatrixXd> Wo(p + l.wo, l.outWidth, l.outIn);
  Map<const VectorXd> bo(p + l.bo, l.outWidth);
  trace.output.noalias() = Wo * trace.layers.back().hidden;
  trace.output.colwise() += bo;
  bounded_sigmoid_inplace(trace.output);
}

MatrixXd SequenceAutoencoder::reconstruct(const SequenceBatch& batch) const {
  Trace trace;
  forward(batch, trace);
  return std::move(trace.output);
}

MatrixXd SequenceAutoencoder::reconstruct(const MatrixXd& window) const {
  if (window.rows() != arch_.windowSize || window.cols() != arch_.inputWidth)
    throw std::invalid_argument("reconstruct: window must be " + std::to_string(arch_.windowSize) +
                                " x " + std::to_string(arch_.inputWidth));
  SequenceBatch b;
  b.windowSize = arch_.windowSize;
  b.batch = 1;
  b.values = window.transpose();
  return reconstruct(b).transpose();
}

double SequenceAutoencoder::loss(const SequenceBatch& batch) const {
  const MatrixXd y = reconstruct(batch);
  return (y - batch.values).squaredNorm() / static_cast<double>(y.size());
}

double SequenceAutoencoder::loss_and_gradient(const SequenceBatch& batch, VectorXd& gradient) const {
  Trace tr;
  forward(batch, tr);
  const auto& l = tr.layout;
  const int T = tr.T, B = tr.B;
  const double* p = params_.data();
  gradient.setZero(params_.size());
  double* g = gradient.data();

  const MatrixXd diff = tr.output - batch.values;
  const double n = static_cast<double>(diff.size());
  const double loss = diff.squaredNorm() / n;

  const MatrixXd dZo =
      ((2.0 / n) * diff.array() * tr.output.array() * (1.0 - tr.output.array())).matrix();
  Map<const MatrixXd> Wo(p + l.wo, l.outWidth, l.outIn);
  Map<MatrixXd> gWo(g + l.wo, l.outWidth, l.outIn);
  Map<VectorXd> gbo(g + l.bo, l.outWidth);
  gWo.noalias() += dZo * tr.layers.back().hidden.transpose();
  gbo += dZo.rowwise().sum();
  MatrixXd dH = Wo.transpose() * dZo;

  const std::size_t E = arch_.encoderWidths.size();
  for (std::size_t k = l.lstm.size(); k-- > E;)
    dH = lstm_backward(p, g, l.lstm[k], tr.layers[k], dH, T, B, arch_.activation, true);

  // dH is now the gradient of the repeated bridge input; fold it back onto
  // the innermost encoder's final hidden state.
  MatrixXd dEncoded = MatrixXd::Zero(dH.rows(), Index{T} * B);
  auto last = dEncoded.rightCols(B);
  for (int t = 0; t < T; ++t) last += dH.middleCols(Index{t} * B, B);

  dH = std::move(dEncoded);
  for (std::size_t k = E; k-- > 0;)
    dH = lstm_backward(p, g, l.lstm[k], tr.layers[k], dH, T, B, arch_.activation, k > 0);
  return loss;
}

std::vector<double> SequenceAutoencoder::reconstruction_errors(
    std::span<const WindowedSequence> windows) const {
  constexpr std::size_t kChunk = 256;
  std::vector<double> out;
  out.reserve(windows.size());
  for (std::size_t start = 0; start < windows.size(); start += kChunk) {
    const auto chunk = windows.subspan(start, std::min(kChunk, windows.size() - start));
    const SequenceBatch batch = SequenceBatch::pack(chunk);
    const MatrixXd sq = (reconstruct(batch) - batch.values).array().square().matrix();
    const int B = batch.batch;
    Eigen::RowVectorXd per(B);
    per.setZero();
    for (int t = 0; t < batch.windowSize; ++t) per += sq.middleCols(Index{t} * B, B).colwise().sum();
    const double denom = static_cast<double>(batch.windowSize) * static_cast<double>(sq.rows());
    for (int k = 0; k < B; ++k) out.push_back(per[k] / denom);
  }
  return out;
}

double reconstruction_error(const MatrixXd& window, const MatrixXd& reconstruction) {
  if (window.rows() != reconstruction.rows() || window.cols() != reconstruction.cols())
    throw std::invalid_argument("reconstruction_error: shape mismatch");
  if (window.size() == 0) throw std::invalid_argument("reconstruction_error: empty window");
  return (window - reconstruction).squaredNorm() / static_cast<double>(window.size());
}

void TrainConfig::validate() const {
  if (epochs <= 0) throw std::invalid_argument("epochs must be positive");
  if (batchSize <= 0) throw std::invalid_argument("batch size must be positive");
  if (!(learningRate > 0)) throw std::invalid_argument("learning rate must be positive");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1))
    throw std::invalid_argument("Adam decay rates must lie in [0, 1)");
  if (!(epsilon > 0)) throw std::invalid_argument("Adam epsilon must be positive");
  if (windowSize <= 0) throw std::invalid_argument("window size must be positive");
}

AdamOptimizer::AdamOptimizer(Index size, double beta1, double beta2, double epsilon)
    : m_(VectorXd::Zero(size)), v_(VectorXd::Zero(size)), beta1_(beta1), beta2_(beta2),
      epsilon_(epsilon) {}

void AdamOptimizer::step(VectorXd& params, const VectorXd& gradient, double learningRate) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * gradient;
  v_ = beta2_ * v_ + (1.0 - beta2_) * gradient.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -=
      learningRate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + epsilon_);
}

void continue_training(SequenceAutoencoder& model, std::span<const WindowedSequence> windows,
                       const TrainConfig& config, TrainingHistory* history) {
  if (windows.empty()) throw std::invalid_argument("train: no training windows");
  if (config.epochs < 0 || config.batchSize <= 0 || config.learningRate < 0)
    throw std::invalid_argument("train: invalid configuration");
  for (const auto& w : windows)
    if (w.size() != model.windowSize())
      throw std::invalid_argument("train: window size does not match the autoencoder");

  AdamOptimizer adam(model.parameters().size(), config.beta1, config.beta2, config.epsilon);
  std::mt19937_64 shuffler(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  VectorXd gradient(model.parameters().size());
  std::vector<const WindowedSequence*> batch;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffler);
    double total = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batchSize)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batchSize));
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(&windows[order[k]]);
      const SequenceBatch packed = SequenceBatch::pack(std::span<const WindowedSequence* const>(batch));
      const double loss = model.loss_and_gradient(packed, gradient);
      if (!std::isfinite(loss)) throw std::runtime_error("train: non-finite loss");
      adam.step(model.parameters(), gradient, config.learningRate);
      total += loss;
      ++batches;
    }
    if (history) history->epochLoss.push_back(total / static_cast<double>(batches));
  }
}

SequenceAutoencoder train(std::span<const WindowedSequence> windows, const TrainConfig& config,
                          const Architecture& arch, TrainingHistory* history) {
  config.validate();
  if (windows.empty()) throw std::invalid_argument("train: no training windows");
  Architecture a = arch;
  a.windowSize = config.windowSize;
  auto model = SequenceAutoencoder::initialize(a, config.seed);
  continue_training(model, windows, config, history);
  return model;
}

std::uint64_t parameter_digest(const VectorXd& params) {
  return fnv1a_bytes(params.data(), static_cast<std::size_t>(params.size()) * sizeof(double));
}

}  // namespace flowguard
