// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance runner. Usage: surfseg_acceptance [criterion ...] [--workdir DIR]
// Prints one "CRITERION n: PASS|FAIL ..." line per requested criterion and
// exits nonzero when any of them fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "surfseg/checkpoint.hpp"
#include "surfseg/hash_encoding.hpp"
#include "surfseg/losses.hpp"
#include "surfseg/mesh.hpp"
#include "surfseg/parallel.hpp"
#include "surfseg/renderer.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace surfseg;
using namespace surfseg::testing;
using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------- 1

Outcome criterion1() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> fdist(1e-3, 1.0), bdist(1.0, 400.0);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const double f = fdist(rng) * (k % 4 == 3 ? -1.0 : 1.0);
    const double b = bdist(rng);
    const double closed = std::max(1.0 - std::exp(-b * f), 0.0);
    worst = std::max(worst, std::abs(alpha_from_sdf(f, -f, b) - closed));
  }
  const double example = alpha_from_sdf(0.1, -0.1, 10.0);
  const bool ok = worst <= 1e-9 && std::abs(example - 0.632121) < 5e-7;
  return {ok, "max |alpha - closed form| = " + fmt("%.3g", worst) + ", alpha(0.1,-0.1,10) = " +
                  fmt("%.6f", example)};
}

// ---------------------------------------------------------------- 2

Outcome criterion2() {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> len(1, 256);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const int n = len(rng);
    std::vector<double> alphas(n);
    std::vector<Vec3> colors(n, Vec3::Zero());
    double survive = 1.0;
    for (auto& a : alphas) {
      a = u(rng);
      // Mix in saturated and vanishing alphas.
      if (k % 5 == 0) a = a * a * a;
      survive *= 1.0 - a;
    }
    const Accumulation acc = accumulate(alphas, colors);
    double weight_sum = 0.0;
    for (int i = 0; i < n; ++i) weight_sum += acc.transmittance[i] * alphas[i];
    worst = std::max({worst, std::abs(weight_sum - (1.0 - survive)), std::abs(acc.alpha - (1.0 - survive))});
  }
  return {worst <= 1e-9, "max |sum T a - (1 - prod(1 - a))| = " + fmt("%.3g", worst)};
}

// ---------------------------------------------------------------- 3

struct GradCheck {
  int cases = 0;
  double worst = 0.0;
  void add(double analytic, double numeric, double floor = 1e-6) {
    ++cases;
    worst = std::max(worst, rel_error(analytic, numeric, floor));
  }
};

GradCheck check_losses(std::mt19937_64& rng) {
  GradCheck g;
  std::uniform_real_distribution<double> u(-1.0, 1.0), p(0.05, 0.95);
  const int m = 6;
  for (int trial = 0; trial < 30; ++trial) {
    Matrix<double> rendered(m, 3), target(m, 3), normals(m, 3), sdf(m, 1), alpha(m, 1), mask(m, 1);
    for (int i = 0; i < m; ++i) {
      for (int c = 0; c < 3; ++c) {
        rendered(i, c) = 0.5 + 0.5 * u(rng);
        target(i, c) = 0.5 + 0.5 * u(rng);
        normals(i, c) = u(rng);
      }
      sdf(i, 0) = u(rng);
      alpha(i, 0) = p(rng);
      mask(i, 0) = (i + trial) % 2;
    }
    // Each loss: gradient with respect to one random input entry.
    auto run = [&](int which, Matrix<double>& input, int r, int c) {
      auto eval = [&](bool grad) -> std::pair<double, double> {
        Tape<double> tape;
        const Var x = tape.constant(input);
        Var loss;
        switch (which) {
          case 0: loss = color_loss(tape, x, target); break;
          case 1: loss = eikonal_loss(tape, x); break;
          case 2: loss = sparsity_loss(tape, x, 10.0); break;
          default: loss = mask_loss(tape, x, mask); break;
        }
        double d = 0.0;
        if (grad) {
          tape.backward(loss);
          d = tape.adjoint(x)(r, c);
        }
        return {tape.value(loss)(0, 0), d};
      };
      const double analytic = eval(true).second;
      const double numeric = central_difference(
          [&](double v) {
            const double keep = input(r, c);
            input(r, c) = v;
            const double out = eval(false).first;
            input(r, c) = keep;
            return out;
          },
          input(r, c), 1e-6);
      g.add(analytic, numeric);
    };
    std::uniform_int_distribution<int> row(0, m - 1), col(0, 2);
    for (int rep = 0; rep < 1; ++rep) {
      run(0, rendered, row(rng), col(rng));
      run(1, normals, row(rng), col(rng));
      run(2, sdf, row(rng), 0);
      run(3, alpha, row(rng), 0);
    }
  }
  return g;
}

GradCheck check_alpha(std::mt19937_64& rng) {
  GradCheck g;
  std::uniform_real_distribution<double> f(-0.05, 0.05), b(1.0, 200.0);
  int valid = 0;
  while (valid < 120) {
    const double fi = f(rng), fn = f(rng), bb = b(rng);
    const AlphaGrad ag = alpha_from_sdf_grad(fi, fn, bb);
    // Stay away from the max(., 0) kink where the derivative jumps.
    if (ag.alpha < 1e-4) continue;
    ++valid;
    const double h = 1e-7;
    g.add(ag.d_fi, central_difference([&](double x) { return alpha_from_sdf(x, fn, bb); }, fi, h));
    g.add(ag.d_fnext, central_difference([&](double x) { return alpha_from_sdf(fi, x, bb); }, fn, h));
    g.add(ag.d_b, central_difference([&](double x) { return alpha_from_sdf(fi, fn, x); }, bb, 1e-5));
  }
  return g;
}

FieldConfig small_fields(std::uint64_t seed) {
  FieldConfig fc;
  for (HashGridConfig* grid : {&fc.focor_grid, &fc.baco_grid}) {
    grid->levels = 3;
    grid->features_per_level = 2;
    grid->table_size = 1u << 10;
    grid->n_min = 4;
    grid->n_max = 16;
  }
  fc.seed = seed;
  return fc;
}

GradCheck check_mlps(std::mt19937_64& rng) {
  GradCheck g;
  FieldSet fields(small_fields(7));
  // Larger table values so the encoding matters in the check.
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (FieldKind kind : {FieldKind::kFocor, FieldKind::kBaco}) {
    auto& table = fields.params()[fields.ids(kind).grid].values;
    for (auto& v : table) v = static_cast<float>(0.05 * u(rng));
  }
  const int n = 5;
  for (FieldKind kind : {FieldKind::kFocor, FieldKind::kBaco}) {
    const double extent = domain_half_extent(kind) * 0.45;
    Matrix<double> pos(n, 3), dirs(n, 3);
    for (int i = 0; i < n; ++i) {
      const Vec3 d = Vec3(u(rng), u(rng), u(rng)).normalized();
      for (int c = 0; c < 3; ++c) {
        pos(i, c) = extent * u(rng);
        dirs(i, c) = d[c];
      }
    }
    // Random linear read-out of every output head.
    const int out_cols = 1 + (kind == FieldKind::kFocor ? kFocorGeoDim : kBacoGeoDim) + 3 + 3 +
                         (kind == FieldKind::kFocor ? 1 : 0);
    Matrix<double> probe(n, out_cols);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < out_cols; ++c) probe(i, c) = u(rng);
    auto objective = [&](ad::GradStore<double>* grads) {
      Tape<double> tape;
      FieldQuery<double> q;
      q.positions = &pos;
      q.directions = &dirs;
      const FieldGraph fg = build_field_graph(tape, fields, kind, q);
      std::vector<Var> parts{fg.sdf, fg.geo, fg.normals, fg.color};
      if (kind == FieldKind::kFocor) parts.push_back(fg.alpha_head);
      const Var all = tape.concat_cols(parts);
      const Var loss = tape.sum(tape.mul(all, tape.constant(probe)));
      if (grads) tape.backward(loss, *grads);
      return tape.value(loss)(0, 0);
    };
    ad::GradStore<double> grads(fields.params());
    grads.zero();
    objective(&grads);
    const FieldParams& ids = fields.ids(kind);
    const std::vector<ad::ParamId> tensors{ids.grid,   ids.sdf_w0, ids.sdf_b0, ids.sdf_w1, ids.sdf_b1,
                                           ids.rgb_w0, ids.rgb_b0, ids.rgb_w1, ids.rgb_b1, ids.rgb_w2,
                                           ids.rgb_b2};
    int done = 0;
    while (done < 60) {
      const ad::ParamId id = tensors[done % tensors.size()];
      auto& values = fields.params()[id].values;
      std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
      const std::size_t e = pick(rng);
      const double analytic = grads[id][e];
      // Untouched hash slots have exactly zero gradient; sample touched ones.
      if (id.index == ids.grid.index && analytic == 0.0) continue;
      const double numeric =
          float_param_derivative(values[e], 1e-4, [&] { return objective(nullptr); });
      g.add(analytic, numeric, 1e-3);
      ++done;
    }
  }
  return g;
}

GradCheck check_hash(std::mt19937_64& rng) {
  GradCheck g;
  HashGridConfig cfg;
  cfg.levels = 4;
  cfg.features_per_level = 2;
  cfg.table_size = 1u << 12;
  cfg.n_min = 4;
  cfg.n_max = 64;
  const HashGrid grid(cfg);
  const int width = cfg.levels * cfg.features_per_level;
  std::vector<float> table(static_cast<std::size_t>(cfg.levels) * cfg.table_size * cfg.features_per_level);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : table) v = static_cast<float>(u(rng) - 0.5);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 p(u(rng), u(rng), u(rng));
    std::vector<double> upstream(width), grad(table.size(), 0.0), out(width);
    for (auto& v : upstream) v = u(rng) - 0.5;
    grid.encode_backward<double>(p, upstream, grad);
    std::vector<std::size_t> touched;
    for (std::size_t i = 0; i < grad.size(); ++i)
      if (grad[i] != 0.0) touched.push_back(i);
    const std::size_t e = touched[trial % touched.size()];
    auto f = [&] {
      grid.encode<double>(table, p, out);
      double s = 0.0;
      for (int j = 0; j < width; ++j) s += out[j] * upstream[j];
      return s;
    };
    g.add(grad[e], float_param_derivative(table[e], 1e-2, f));
  }
  return g;
}

Outcome criterion3() {
  std::mt19937_64 rng(303);
  const GradCheck losses = check_losses(rng);
  const GradCheck alpha = check_alpha(rng);
  const GradCheck mlps = check_mlps(rng);
  const GradCheck hash = check_hash(rng);
  const bool ok = losses.cases >= 100 && alpha.cases >= 100 && mlps.cases >= 100 && hash.cases >= 100 &&
                  std::max({losses.worst, alpha.worst, mlps.worst, hash.worst}) <= 1e-4;
  std::ostringstream s;
  s << "max rel err: losses " << fmt("%.2g", losses.worst) << " (" << losses.cases << "), alpha "
    << fmt("%.2g", alpha.worst) << " (" << alpha.cases << "), mlps " << fmt("%.2g", mlps.worst) << " ("
    << mlps.cases << "), hash " << fmt("%.2g", hash.worst) << " (" << hash.cases << ")";
  return {ok, s.str()};
}

// ---------------------------------------------------------------- 4

Outcome criterion4() {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(-1.0, 1.0), r(0.2, 0.95);
  const int n = 500;
  Matrix<double> centers(n, 3);
  for (int i = 0; i < n; ++i) centers.row(i) = (r(rng) * Vec3(u(rng), u(rng), u(rng)).normalized()).transpose();
  const NormalStencil st = make_normal_stencil(n, nullptr, 1e-3);
  const Matrix<double> stacked = st.stack(centers);
  Matrix<double> sdf(stacked.rows(), 1);
  for (int i = 0; i < stacked.rows(); ++i) sdf(i, 0) = stacked.row(i).norm() - 0.5;
  Tape<double> tape;
  const Var normals = tape.sparse_linear(tape.constant(sdf), st.map);
  const double eik = tape.value(eikonal_loss(tape, normals))(0, 0);

  std::vector<double> values(1000);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    double expected = 0.0;
    const double tau = 1.0 + 19.0 * (u(rng) + 1.0) / 2.0;
    for (auto& v : values) {
      v = 2.0 * u(rng);
      expected += std::exp(-2.0 * tau * std::abs(v));
    }
    expected /= static_cast<double>(values.size());
    worst = std::max(worst, std::abs(sparsity_loss(values, tau) - expected));
  }
  return {eik <= 1e-5 && worst <= 1e-9,
          "eikonal on sphere SDF = " + fmt("%.3g", eik) + ", sparsity max err = " + fmt("%.3g", worst)};
}

// ---------------------------------------------------------------- 8

Outcome criterion8() {
  const auto t0 = std::chrono::steady_clock::now();
  const SurfaceMesh mesh = extract_mesh(
      [](const std::vector<Vec3>& pts) {
        std::vector<double> out(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) out[i] = pts[i].norm() - 0.5;
        return out;
      },
      64);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double area = mesh.area();
  const double target = 4.0 * M_PI * 0.25;
  const double err = std::abs(area - target) / target;
  const bool tight = mesh.watertight();
  return {err <= 0.05 && tight && seconds < 60.0,
          "area " + fmt("%.5f", area) + " vs " + fmt("%.5f", target) + " (rel " + fmt("%.2e", err) +
              "), watertight " + (tight ? "yes" : "no") + ", " + fmt("%.2f s", seconds)};
}

// ---------------------------------------------------------------- 10

ViewMetrics naive_metrics(const Image& pred, const Image& gt) {
  double sad = 0.0, se = 0.0;
  long inter = 0, uni = 0, correct = 0;
  for (int y = 0; y < pred.height; ++y) {
    for (int x = 0; x < pred.width; ++x) {
      const double a = pred.at(x, y);
      const double m = gt.at(x, y) > 0.5f ? 1.0 : 0.0;
      sad += std::abs(a - m);
      se += (a - m) * (a - m);
      const bool pb = a >= 0.5, gb = m == 1.0;
      if (pb && gb) ++inter;
      if (pb || gb) ++uni;
      if (pb == gb) ++correct;
    }
  }
  const double n = static_cast<double>(pred.width) * pred.height;
  return {sad / 1000.0, se / n * 1000.0, uni ? double(inter) / double(uni) : 1.0, double(correct) / n};
}

Outcome criterion10() {
  std::mt19937_64 rng(1010);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Image> preds, gts;
  for (int k = 0; k < 100; ++k) {
    Image p(16, 16, 1), g(16, 16, 1);
    for (auto& v : p.data) v = static_cast<float>(u(rng));
    for (auto& v : g.data) v = u(rng) < 0.5 ? 1.0f : 0.0f;
    preds.push_back(p);
    gts.push_back(g);
  }
  const EvalReport report = evaluate(preds, gts);
  double worst = 0.0;
  ViewMetrics mean;
  for (int k = 0; k < 100; ++k) {
    const ViewMetrics n = naive_metrics(preds[k], gts[k]);
    const ViewMetrics& r = report.views[k];
    worst = std::max({worst, std::abs(n.sad - r.sad), std::abs(n.mse - r.mse), std::abs(n.iou - r.iou),
                      std::abs(n.acc - r.acc)});
    mean.iou += n.iou / 100.0;
    mean.acc += n.acc / 100.0;
  }
  worst = std::max({worst, std::abs(mean.iou - report.mean.iou), std::abs(mean.acc - report.mean.acc)});

  // Identity and complement on a half-ones mask.
  Image gt(16, 16, 1), comp(16, 16, 1);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      gt.at(x, y) = x < 8 ? 1.0f : 0.0f;
      comp.at(x, y) = 1.0f - gt.at(x, y);
    }
  const ViewMetrics same = evaluate_view(gt, gt);
  const ViewMetrics opposite = evaluate_view(comp, gt);
  const bool trivial = same.sad == 0 && same.mse == 0 && same.iou == 1 && same.acc == 1 && opposite.iou == 0 &&
                       opposite.acc == 0;
  return {worst <= 1e-12 && trivial,
          "max |evaluate - naive| = " + fmt("%.3g", worst) + ", identity/complement " + (trivial ? "ok" : "wrong")};
}

// ---------------------------------------------------------------- training criteria

struct TrainingContext {
  fs::path workdir;
  SynthScene synth;
  std::optional<Checkpoint> converged;
  std::vector<std::uint8_t> converged_bytes_cache;
  double train_seconds = 0.0;
};

constexpr long kAcceptanceIterations = 3000;
constexpr std::uint64_t kAcceptanceSeed = 11;

Checkpoint train_sphere(const SceneBundle& scene, long iterations, std::uint64_t seed, double* seconds) {
  const auto t0 = std::chrono::steady_clock::now();
  Trainer trainer(scene, desk_config(iterations, seed));
  trainer.run(iterations, [&](const Trainer& t) {
    if (t.iteration() % 500 == 0) {
      const auto& h = t.history().back();
      std::cerr << "  iter " << t.iteration() << " color " << h.color << " b " << h.b << "\n";
    }
  });
  if (seconds) *seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return trainer.checkpoint();
}

const Checkpoint& converged(TrainingContext& ctx) {
  if (!ctx.converged) {
    const fs::path path = ctx.workdir / "sphere_converged.ckpt";
    std::cerr << "training the sphere scene (" << kAcceptanceIterations << " iterations)\n";
    ctx.converged = train_sphere(ctx.synth.scene, kAcceptanceIterations, kAcceptanceSeed, &ctx.train_seconds);
    ctx.converged->save(path);
  }
  return *ctx.converged;
}

Outcome criterion5(TrainingContext& ctx) {
  const Checkpoint& ckpt = converged(ctx);
  const TrainedModel model(ckpt);
  const SceneBundle& scene = ctx.synth.scene;
  std::vector<Image> pred, gt;
  double identity = 0.0;
  for (std::size_t v = 0; v < scene.views.size(); ++v) {
    const SegmentationOutput out = segment_view(model, scene, v);
    pred.push_back(out.pixel_alpha);
    gt.push_back(ctx.synth.gt_masks[v]);
    for (int y = 0; y < out.composite.height; ++y) {
      for (int x = 0; x < out.composite.width; ++x) {
        const double a = out.foreground_rgba.at(x, y, 3);
        for (int c = 0; c < 3; ++c) {
          const double recon = a * out.foreground_rgba.at(x, y, c) + (1.0 - a) * out.background_rgb.at(x, y, c);
          identity = std::max(identity, std::abs(recon - out.composite.at(x, y, c)));
        }
      }
    }
  }
  const EvalReport report = evaluate(pred, gt);
  std::ofstream(ctx.workdir / "criterion5_report.json") << report.to_json();
  const bool ok = report.mean.iou >= 0.95 && report.mean.acc >= 0.97 && identity <= 1e-6;
  return {ok, "mIoU " + fmt("%.4f", report.mean.iou) + ", Acc " + fmt("%.4f", report.mean.acc) +
                  ", compositing max err " + fmt("%.2e", identity) + ", " +
                  std::to_string(kAcceptanceIterations) + " iterations" +
                  (ctx.train_seconds > 0 ? ", train " + fmt("%.0f s", ctx.train_seconds) : "")};
}

Outcome criterion7(TrainingContext& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const Checkpoint& ckpt = converged(ctx);
  const TrainedModel model(ckpt);
  const SceneBundle& scene = ctx.synth.scene;
  const RenderSettings with_grid = model.render_settings(true);
  const RenderSettings without = model.render_settings(false);
  if (!with_grid.occupancy) return {false, "checkpoint has no active occupancy grid"};
  double worst = 0.0;
  RenderStats on, off;
  for (std::size_t v = 0; v < scene.views.size(); v += 3) {
    std::vector<Ray> rays;
    for (int y = 0; y < scene.views[v].image.height; ++y)
      for (int x = 0; x < scene.views[v].image.width; ++x) rays.push_back(scene.pixel_ray(v, x, y));
    const std::vector<std::uint8_t> region(rays.size(), 1);
    const auto a = render_rays(model.field(), rays, region, with_grid, true, &on);
    const auto b = render_rays(model.field(), rays, region, without, true, &off);
    for (std::size_t i = 0; i < rays.size(); ++i) worst = std::max(worst, std::abs(a[i].alpha - b[i].alpha));
  }
  const double ratio = static_cast<double>(off.focor_points) / static_cast<double>(std::max<std::size_t>(on.focor_points, 1));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst <= 1e-3 && ratio >= 3.0,
          "max alpha diff " + fmt("%.2e", worst) + ", FoCoR evaluations reduced " + fmt("%.2fx", ratio) + ", " +
              fmt("%.0f s", seconds)};
}

Outcome criterion9(TrainingContext& ctx) {
  const int previous = max_threads();
  set_max_threads(1);
  const std::string first = converged(ctx).serialize();
  std::cerr << "retraining with the same seed for the determinism check\n";
  const std::string second = train_sphere(ctx.synth.scene, kAcceptanceIterations, kAcceptanceSeed, nullptr).serialize();
  set_max_threads(previous);
  return {first == second, std::to_string(first.size()) + " bytes, " +
                               (first == second ? "byte-identical" : "checkpoints differ")};
}

// Iterations until the subsampled mIoU first reaches 0.9 (checked every
// `every` steps), or -1 when `cap` is hit first.
long iterations_to_target(const SynthScene& synth, std::uint64_t seed, bool masks, long cap, long every) {
  Trainer trainer(synth.scene, desk_config(cap, seed, masks));
  const std::vector<std::size_t> views{0, 3, 6, 9};
  while (trainer.iteration() < cap) {
    trainer.run(trainer.iteration() + every);
    const NeuralField field(trainer.fields());
    const double iou = mean_iou(field, synth.scene, synth.gt_masks, trainer.render_settings(), views, 2);
    if (iou >= 0.9) return trainer.iteration();
  }
  return -1;
}

Outcome criterion6(TrainingContext& ctx) {
  const long cap = 3000, every = 25;
  SynthScene maskless = ctx.synth;
  for (auto& v : maskless.scene.views) v.coarse_mask.reset();
  std::ostringstream s;
  bool all = true;
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    const long with = iterations_to_target(ctx.synth, seed, true, cap, every);
    const long without = iterations_to_target(maskless, seed, false, cap, every);
    const bool ok = with > 0 && (without < 0 || with < without);
    all = all && ok;
    s << "seed " << seed << ": masks " << with << " vs none " << without << (ok ? "" : " (no)") << "; ";
    std::cerr << "  seed " << seed << " masks " << with << " none " << without << "\n";
  }
  return {all, s.str() + "target mIoU 0.9, checked every " + std::to_string(every) + " iterations"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  fs::path workdir = fs::temp_directory_path() / "surfseg_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--workdir" && i + 1 < argc) {
      workdir = argv[++i];
    } else {
      wanted.insert(std::stoi(a));
    }
  }
  if (wanted.empty()) wanted = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  fs::create_directories(workdir);

  std::unique_ptr<TrainingContext> ctx;
  auto training = [&]() -> TrainingContext& {
    if (!ctx) {
      ctx = std::make_unique<TrainingContext>();
      ctx->workdir = workdir;
      ctx->synth = synth_scene(sphere_spec());
    }
    return *ctx;
  };

  const std::map<int, std::function<Outcome()>> table{
      {1, criterion1},
      {2, criterion2},
      {3, criterion3},
      {4, criterion4},
      {5, [&] { return criterion5(training()); }},
      {6, [&] { return criterion6(training()); }},
      {7, [&] { return criterion7(training()); }},
      {8, criterion8},
      {9, [&] { return criterion9(training()); }},
      {10, criterion10},
  };

  bool all = true;
  for (int c : wanted) {
    const auto it = table.find(c);
    if (it == table.end()) {
      std::cout << "CRITERION " << c << ": FAIL unknown criterion\n";
      all = false;
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = it->second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "CRITERION " << c << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "  ["
              << fmt("%.1f s", seconds) << "]" << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
