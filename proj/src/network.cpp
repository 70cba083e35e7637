#include "mfvpinn/network.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace mfvpinn {

std::size_t NetworkParams::param_count() const {
  std::size_t n = 0;
  for (int l = 1; l <= layer_count(); ++l) {
    const auto rows = static_cast<std::size_t>(layer_dims[static_cast<std::size_t>(l)]);
    const auto cols = static_cast<std::size_t>(layer_dims[static_cast<std::size_t>(l) - 1]);
    n += rows * cols + rows;
  }
  return n;
}

std::size_t NetworkParams::weight_offset(int layer) const {
  std::size_t off = 0;
  for (int l = 1; l < layer; ++l) {
    const auto rows = static_cast<std::size_t>(layer_dims[static_cast<std::size_t>(l)]);
    const auto cols = static_cast<std::size_t>(layer_dims[static_cast<std::size_t>(l) - 1]);
    off += rows * cols + rows;
  }
  return off;
}

std::size_t NetworkParams::bias_offset(int layer) const {
  const auto rows = static_cast<std::size_t>(layer_dims[static_cast<std::size_t>(layer)]);
  const auto cols = static_cast<std::size_t>(layer_dims[static_cast<std::size_t>(layer) - 1]);
  return weight_offset(layer) + rows * cols;
}

NetworkParams init_params(const std::vector<int>& layer_dims, std::uint64_t seed) {
  if (layer_dims.size() < 2 || layer_dims.front() != 2 || layer_dims.back() != 1)
    throw std::invalid_argument("init_params: layer dims must run from 2 inputs to 1 output");
  for (int d : layer_dims)
    if (d < 1) throw std::invalid_argument("init_params: layer width must be positive");

  NetworkParams params;
  params.layer_dims = layer_dims;
  params.seed = seed;
  params.theta.assign(params.param_count(), 0.0);

  Rng rng(seed);
  for (int l = 1; l <= params.layer_count(); ++l) {
    const auto rows = static_cast<std::size_t>(layer_dims[static_cast<std::size_t>(l)]);
    const auto cols = static_cast<std::size_t>(layer_dims[static_cast<std::size_t>(l) - 1]);
    const double sigma = std::sqrt(2.0 / static_cast<double>(rows + cols));
    double* w = params.theta.data() + params.weight_offset(l);
    for (std::size_t i = 0; i < rows * cols; ++i) w[i] = rng.truncated_normal(sigma);
    // biases stay zero
  }
  return params;
}

void NetworkWorkspace::resize(const NetworkParams& params) {
  const auto L = static_cast<std::size_t>(params.layer_count());
  z.assign(L, {});
  jx.assign(L, {});
  jy.assign(L, {});
  t.assign(L, {});
  px.assign(L, {});
  py.assign(L, {});
  std::size_t widest = 0;
  for (std::size_t l = 0; l < L; ++l) {
    const auto n = static_cast<std::size_t>(params.layer_dims[l]);
    z[l].assign(n, 0.0);
    jx[l].assign(n, 0.0);
    jy[l].assign(n, 0.0);
    t[l].assign(n, 0.0);
    px[l].assign(n, 0.0);
    py[l].assign(n, 0.0);
    widest = std::max(widest, n);
  }
  for (auto* buf : {&zbar, &jxbar, &jybar, &sbar, &pxbar, &pybar, &zbar2, &jxbar2, &jybar2})
    buf->assign(widest, 0.0);
}

namespace {

// Runs value + input-gradient propagation for one point, filling the
// workspace layer buffers. Returns (u, du/dx, du/dy).
inline void forward_point(const NetworkParams& params, Vec2 pt, NetworkWorkspace& ws, double& u,
                          Vec2& grad) {
  const int L = params.layer_count();
  ws.z[0][0] = pt.x;
  ws.z[0][1] = pt.y;
  ws.jx[0][0] = 1.0;
  ws.jx[0][1] = 0.0;
  ws.jy[0][0] = 0.0;
  ws.jy[0][1] = 1.0;

  for (int l = 1; l < L; ++l) {
    const auto rows = static_cast<std::size_t>(params.layer_dims[static_cast<std::size_t>(l)]);
    const auto cols = static_cast<std::size_t>(params.layer_dims[static_cast<std::size_t>(l) - 1]);
    const double* A = params.theta.data() + params.weight_offset(l);
    const double* b = params.theta.data() + params.bias_offset(l);
    const auto lp = static_cast<std::size_t>(l - 1);
    const auto lc = static_cast<std::size_t>(l);
    const double* zp = ws.z[lp].data();
    const double* jxp = ws.jx[lp].data();
    const double* jyp = ws.jy[lp].data();
    for (std::size_t j = 0; j < rows; ++j) {
      const double* row = A + j * cols;
      double s = b[j], sx = 0.0, sy = 0.0;
      for (std::size_t k = 0; k < cols; ++k) {
        s += row[k] * zp[k];
        sx += row[k] * jxp[k];
        sy += row[k] * jyp[k];
      }
      const double zj = std::tanh(s);
      const double tj = 1.0 - zj * zj;
      ws.z[lc][j] = zj;
      ws.t[lc][j] = tj;
      ws.px[lc][j] = sx;
      ws.py[lc][j] = sy;
      ws.jx[lc][j] = tj * sx;
      ws.jy[lc][j] = tj * sy;
    }
  }

  // Output layer: affine, single row.
  const auto cols = static_cast<std::size_t>(params.layer_dims[static_cast<std::size_t>(L) - 1]);
  const double* A = params.theta.data() + params.weight_offset(L);
  const double* b = params.theta.data() + params.bias_offset(L);
  const auto lp = static_cast<std::size_t>(L - 1);
  double s = b[0], sx = 0.0, sy = 0.0;
  const double* zp = ws.z[lp].data();
  const double* jxp = ws.jx[lp].data();
  const double* jyp = ws.jy[lp].data();
  for (std::size_t k = 0; k < cols; ++k) {
    s += A[k] * zp[k];
    sx += A[k] * jxp[k];
    sy += A[k] * jyp[k];
  }
  u = s;
  grad = {sx, sy};
}

}  // namespace

void forward_batch(const NetworkParams& params, std::span<const Vec2> points, std::span<double> u,
                   std::span<Vec2> grad, NetworkWorkspace& ws) {
  if (u.size() != points.size() || grad.size() != points.size())
    throw std::invalid_argument("forward_batch: output spans must match point count");
  if (ws.z.size() != static_cast<std::size_t>(params.layer_count())) ws.resize(params);
  for (std::size_t p = 0; p < points.size(); ++p)
    forward_point(params, points[p], ws, u[p], grad[p]);
}

void forward_batch(const NetworkParams& params, std::span<const Vec2> points, std::span<double> u,
                   std::span<Vec2> grad) {
  NetworkWorkspace ws;
  forward_batch(params, points, u, grad, ws);
}

void param_gradient(const NetworkParams& params, std::span<const Vec2> points,
                    std::span<const double> cot_u, std::span<const Vec2> cot_grad,
                    std::span<double> grad_out, NetworkWorkspace& ws) {
  if (cot_u.size() != points.size() || cot_grad.size() != points.size())
    throw std::invalid_argument("param_gradient: cotangent spans must match point count");
  if (grad_out.size() != params.param_count())
    throw std::invalid_argument("param_gradient: gradient span has wrong size");
  if (ws.z.size() != static_cast<std::size_t>(params.layer_count())) ws.resize(params);

  std::memset(grad_out.data(), 0, grad_out.size() * sizeof(double));
  const int L = params.layer_count();

  for (std::size_t p = 0; p < points.size(); ++p) {
    double u;
    Vec2 g;
    forward_point(params, points[p], ws, u, g);
    const double cu = cot_u[p];
    const double cgx = cot_grad[p].x;
    const double cgy = cot_grad[p].y;
    if (cu == 0.0 && cgx == 0.0 && cgy == 0.0) continue;

    // Output layer adjoint.
    {
      const auto cols = static_cast<std::size_t>(params.layer_dims[static_cast<std::size_t>(L) - 1]);
      const double* A = params.theta.data() + params.weight_offset(L);
      double* gA = grad_out.data() + params.weight_offset(L);
      double* gb = grad_out.data() + params.bias_offset(L);
      const auto lp = static_cast<std::size_t>(L - 1);
      const double* zp = ws.z[lp].data();
      const double* jxp = ws.jx[lp].data();
      const double* jyp = ws.jy[lp].data();
      for (std::size_t k = 0; k < cols; ++k) {
        gA[k] += cu * zp[k] + cgx * jxp[k] + cgy * jyp[k];
        ws.zbar[k] = cu * A[k];
        ws.jxbar[k] = cgx * A[k];
        ws.jybar[k] = cgy * A[k];
      }
      gb[0] += cu;
    }

    // Hidden layers, last to first.
    for (int l = L - 1; l >= 1; --l) {
      const auto rows = static_cast<std::size_t>(params.layer_dims[static_cast<std::size_t>(l)]);
      const auto cols = static_cast<std::size_t>(params.layer_dims[static_cast<std::size_t>(l) - 1]);
      const double* A = params.theta.data() + params.weight_offset(l);
      double* gA = grad_out.data() + params.weight_offset(l);
      double* gb = grad_out.data() + params.bias_offset(l);
      const auto lc = static_cast<std::size_t>(l);
      const auto lp = static_cast<std::size_t>(l - 1);
      const double* zc = ws.z[lc].data();
      const double* tc = ws.t[lc].data();
      const double* pxc = ws.px[lc].data();
      const double* pyc = ws.py[lc].data();
      const double* zp = ws.z[lp].data();
      const double* jxp = ws.jx[lp].data();
      const double* jyp = ws.jy[lp].data();

      const bool push = l > 1;
      if (push) {
        std::memset(ws.zbar2.data(), 0, cols * sizeof(double));
        std::memset(ws.jxbar2.data(), 0, cols * sizeof(double));
        std::memset(ws.jybar2.data(), 0, cols * sizeof(double));
      }

      for (std::size_t j = 0; j < rows; ++j) {
        const double tj = tc[j];
        // z = tanh(s), t = 1 - z^2, J = t * P: the pre-activation adjoint
        // collects both the value path and the tangent path through t(s).
        const double sb =
            tj * ws.zbar[j] - 2.0 * zc[j] * tj * (ws.jxbar[j] * pxc[j] + ws.jybar[j] * pyc[j]);
        const double pxb = tj * ws.jxbar[j];
        const double pyb = tj * ws.jybar[j];
        gb[j] += sb;
        double* gRow = gA + j * cols;
        const double* row = A + j * cols;
        if (push) {
          double* zb2 = ws.zbar2.data();
          double* jxb2 = ws.jxbar2.data();
          double* jyb2 = ws.jybar2.data();
          for (std::size_t k = 0; k < cols; ++k) {
            gRow[k] += sb * zp[k] + pxb * jxp[k] + pyb * jyp[k];
            zb2[k] += row[k] * sb;
            jxb2[k] += row[k] * pxb;
            jyb2[k] += row[k] * pyb;
          }
        } else {
          for (std::size_t k = 0; k < cols; ++k)
            gRow[k] += sb * zp[k] + pxb * jxp[k] + pyb * jyp[k];
        }
      }
      if (push) {
        std::swap(ws.zbar, ws.zbar2);
        std::swap(ws.jxbar, ws.jxbar2);
        std::swap(ws.jybar, ws.jybar2);
      }
    }
  }
}

void param_gradient(const NetworkParams& params, std::span<const Vec2> points,
                    std::span<const double> cot_u, std::span<const Vec2> cot_grad,
                    std::span<double> grad_out) {
  NetworkWorkspace ws;
  param_gradient(params, points, cot_u, cot_grad, grad_out, ws);
}

void apply_lift(const BoundaryLift& lift, std::span<const Vec2> points, std::span<double> u,
                std::span<Vec2> grad) {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const FieldSample p = lift.phi(points[i]);
    const FieldSample g = lift.gbar(points[i]);
    const double raw = u[i];
    u[i] = p.value * raw + g.value;
    grad[i] = p.value * grad[i] + raw * p.grad + g.grad;
  }
}

LiftCache cache_lift(const BoundaryLift& lift, std::span<const Vec2> points) {
  LiftCache cache;
  cache.phi.reserve(points.size());
  cache.gbar.reserve(points.size());
  cache.dphi.reserve(points.size());
  cache.dgbar.reserve(points.size());
  for (Vec2 pt : points) {
    const FieldSample p = lift.phi(pt);
    const FieldSample g = lift.gbar(pt);
    cache.phi.push_back(p.value);
    cache.dphi.push_back(p.grad);
    cache.gbar.push_back(g.value);
    cache.dgbar.push_back(g.grad);
  }
  return cache;
}

void apply_lift_cached(const LiftCache& cache, std::span<double> u, std::span<Vec2> grad) {
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double raw = u[i];
    u[i] = cache.phi[i] * raw + cache.gbar[i];
    grad[i] = cache.phi[i] * grad[i] + raw * cache.dphi[i] + cache.dgbar[i];
  }
}

void lift_cotangents_cached(const LiftCache& cache, std::span<double> cot_u,
                            std::span<Vec2> cot_grad) {
  for (std::size_t i = 0; i < cot_u.size(); ++i) {
    cot_u[i] = cache.phi[i] * cot_u[i] + cache.dphi[i].dot(cot_grad[i]);
    cot_grad[i] = cache.phi[i] * cot_grad[i];
  }
}

}  // namespace mfvpinn
