#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "narrate/blend.hpp"
#include "narrate/integrate.hpp"
#include "narrate/io.hpp"
#include "narrate/mesh.hpp"
#include "narrate/metrics.hpp"
#include "narrate/relight.hpp"
#include "narrate/service/pipeline.hpp"
#include "narrate/service/server.hpp"
#include "narrate/stylize.hpp"

namespace fs = std::filesystem;
using namespace narrate;

namespace {

void write_text(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text << "\n";
    return;
  }
  const std::string body = text + "\n";
  write_file(out, std::span(reinterpret_cast<const std::uint8_t*>(body.data()), body.size()));
}

Mask read_mask_or_all(const std::string& path, int w, int h) {
  if (path.empty()) return Mask(w, h, true);
  Mask m = read_mask_png(path);
  require(m.width() == w && m.height() == h, "mask size does not match");
  return m;
}

service::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Portrait geometry, fusion, relighting and stylization toolkit"};
  app.require_subcommand(1);

  // integrate
  struct {
    std::string normal, mask, coarse, out, solver = "cg", gauge = "mean_zero";
    double lambda = 1.0, tau = 0.1, tol = 1e-8;
  } ig;
  auto* integrate_cmd = app.add_subcommand("integrate", "Integrate a normal map into a height field");
  integrate_cmd->add_option("--normal", ig.normal, "16-bit normal PNG")->required();
  integrate_cmd->add_option("--mask", ig.mask, "Face mask PNG")->required();
  integrate_cmd->add_option("--coarse-depth", ig.coarse, "One-channel PFM sampled at discontinuities");
  integrate_cmd->add_option("--lambda", ig.lambda, "Prior weight");
  integrate_cmd->add_option("--tau", ig.tau, "n_z clamp threshold");
  integrate_cmd->add_option("--solver", ig.solver)->check(CLI::IsMember({"cg", "direct"}));
  integrate_cmd->add_option("--gauge", ig.gauge)->check(CLI::IsMember({"mean_zero", "prior_anchored"}));
  integrate_cmd->add_option("--tol", ig.tol, "CG relative tolerance");
  integrate_cmd->add_option("-o,--output", ig.out, "Height PFM")->required();

  // render
  struct {
    std::string height, normal, image, ref_cam, new_cam, out, sampling = "nearest";
    double edge_jump = kDefaultEdgeJump;
  } rd;
  auto* render_cmd = app.add_subcommand("render", "Lift a height field to a mesh and render a new view");
  render_cmd->add_option("--height", rd.height, "Height PFM")->required();
  render_cmd->add_option("--normal", rd.normal, "16-bit normal PNG; its mask selects the surface")->required();
  render_cmd->add_option("--image", rd.image, "Reference colour PNG")->required();
  render_cmd->add_option("--ref-cam", rd.ref_cam, "Reference camera JSON")->required();
  render_cmd->add_option("--new-cam", rd.new_cam, "Target camera JSON")->required();
  render_cmd->add_option("--sampling", rd.sampling)->check(CLI::IsMember({"nearest", "bilinear"}));
  render_cmd->add_option("--edge-jump", rd.edge_jump, "Drop triangles spanning more height than this");
  render_cmd->add_option("-o,--output", rd.out, "Output directory")->required();

  // blend
  struct {
    std::string dest, src, region, out, mode = "source", kind = "color";
    double tol = kDefaultBlendTol;
  } bl;
  auto* blend_cmd = app.add_subcommand("blend", "Poisson-blend a source into a destination inside a region");
  blend_cmd->add_option("--dest", bl.dest)->required();
  blend_cmd->add_option("--src", bl.src)->required();
  blend_cmd->add_option("--region", bl.region, "Region mask PNG")->required();
  blend_cmd->add_option("--mode", bl.mode)->check(CLI::IsMember({"source", "mixed"}));
  blend_cmd->add_option("--kind", bl.kind)->check(CLI::IsMember({"color", "normal"}));
  blend_cmd->add_option("--tol", bl.tol);
  blend_cmd->add_option("-o,--output", bl.out)->required();

  // relight
  struct {
    std::string normal, albedo, env, out, ks;
    std::vector<std::string> dirs;
    double kd = 1.0;
    int env_height = 0;
  } rl;
  auto* relight_cmd = app.add_subcommand("relight", "Relight from a normal map and albedo");
  relight_cmd->add_option("--normal", rl.normal)->required();
  relight_cmd->add_option("--albedo", rl.albedo)->required();
  relight_cmd->add_option("--env", rl.env, "Lat-long radiance PFM");
  relight_cmd->add_option("--dir", rl.dirs, "Directional light x,y,z,r,g,b (repeatable)");
  relight_cmd->add_option("--kd", rl.kd);
  relight_cmd->add_option("--ks", rl.ks, "Comma-separated specular gains");
  relight_cmd->add_option("--env-height", rl.env_height, "Downsample the environment to this many rows");
  relight_cmd->add_option("-o,--output", rl.out)->required();

  // shade / apply-shade / hatch
  struct {
    std::string orig, relit, out;
    double eps = kDefaultShadingFloor;
  } sh;
  auto* shade_cmd = app.add_subcommand("shade", "Shading map relit / original");
  shade_cmd->add_option("--orig", sh.orig)->required();
  shade_cmd->add_option("--relit", sh.relit)->required();
  shade_cmd->add_option("--eps", sh.eps);
  shade_cmd->add_option("-o,--output", sh.out)->required();

  struct {
    std::string shading, styled, out;
  } as;
  auto* apply_cmd = app.add_subcommand("apply-shade", "Apply a shading map to a styled image");
  apply_cmd->add_option("--shading", as.shading)->required();
  apply_cmd->add_option("--styled", as.styled)->required();
  apply_cmd->add_option("-o,--output", as.out)->required();

  struct {
    std::string height, shading, mask, out;
    HatchParams params;
  } ht;
  auto* hatch_cmd = app.add_subcommand("hatch", "Curvature-aligned hatching");
  hatch_cmd->add_option("--height", ht.height)->required();
  hatch_cmd->add_option("--shading", ht.shading, "PFM (linear) or PNG shading")->required();
  hatch_cmd->add_option("--mask", ht.mask, "Surface mask PNG (default: whole frame)");
  hatch_cmd->add_option("--levels", ht.params.levels);
  hatch_cmd->add_option("--spacing", ht.params.spacing);
  hatch_cmd->add_option("--length", ht.params.length);
  hatch_cmd->add_option("--cross-threshold", ht.params.cross_threshold);
  hatch_cmd->add_option("--sigma", ht.params.sigma);
  hatch_cmd->add_option("-o,--output", ht.out)->required();

  // eval
  struct {
    std::string a, b, out;
  } ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluation metrics");
  eval_cmd->require_subcommand(1);
  auto* eval_normals = eval_cmd->add_subcommand("normals", "Angular error between normal maps");
  auto* eval_images = eval_cmd->add_subcommand("images", "SSIM / PSNR / RMSE between images");
  for (auto* c : {eval_normals, eval_images}) {
    c->add_option("--a", ev.a)->required();
    c->add_option("--b", ev.b)->required();
    c->add_option("-o,--output", ev.out, "Report JSON (default stdout)");
  }

  // serve
  service::ServerConfig sv;
  std::string session_root = "sessions";
  int max_dimension = kMaxDimension;
  std::size_t cache_size = 256;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  serve_cmd->add_option("--host", sv.host);
  serve_cmd->add_option("--port", sv.port)->envname("PORT");
  serve_cmd->add_option("--session-root", session_root)->envname("SESSION_ROOT");
  serve_cmd->add_option("--max-dimension", max_dimension)->envname("MAX_DIMENSION");
  serve_cmd->add_option("--cache-size", cache_size)->envname("CACHE_SIZE");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*integrate_cmd) {
      NormalMap n = read_normal_png(ig.normal);
      const Mask m = read_mask_or_all(ig.mask, n.width(), n.height());
      for (std::size_t i = 0; i < n.mask.size(); ++i)
        if (!m[i]) {
          n.normals[i] = {};
          n.mask[i] = 0;
        }
      IntegrationConfig cfg;
      cfg.prior_weight = ig.lambda;
      cfg.nz_threshold = ig.tau;
      cfg.cg_tol = ig.tol;
      cfg.solver = ig.solver == "direct" ? SolverKind::direct : SolverKind::cg;
      cfg.gauge = ig.gauge == "prior_anchored" ? Gauge::prior_anchored : Gauge::mean_zero;
      DepthPrior prior;
      if (!ig.coarse.empty())
        prior = prior_from_depth(read_height_pfm(ig.coarse), discontinuity_pixels(n, cfg.nz_threshold),
                                 cfg.prior_weight);
      IntegrationReport rep;
      write_pfm(integrate(n, prior, cfg, &rep), ig.out);
      std::fprintf(stderr, "integrate: %d iterations, relative residual %.3g, %d components\n", rep.iterations,
                   rep.relative_residual, rep.components);
    } else if (*render_cmd) {
      const NormalMap n = read_normal_png(rd.normal);
      HeightField h = read_height_pfm(rd.height);
      require(h.z.same_shape(n.normals), "height field and normal map differ in size");
      h.mask = n.mask;
      const CameraPose ref = read_camera(rd.ref_cam), cam = read_camera(rd.new_cam);
      const FaceMesh mesh = build_mesh(h, n, ref, rd.edge_jump);
      const RgbImage img = read_rgb_png(rd.image);
      const RenderOutput out =
          render(mesh, img, ref, cam, rd.sampling == "bilinear" ? Sampling::bilinear : Sampling::nearest);
      const fs::path dir = rd.out;
      fs::create_directories(dir);
      write_rgb_png(out.color, dir / "color.png");
      write_normal_png(out.normal, dir / "normal.png");
      write_pfm(out.depth, dir / "depth.pfm");
      write_mask_png(out.coverage, dir / "coverage.png");
      export_obj(mesh, dir / "mesh.obj");
    } else if (*blend_cmd) {
      const Mask region = read_mask_png(bl.region);
      const GradientMode mode = bl.mode == "mixed" ? GradientMode::mixed : GradientMode::source;
      BlendReport rep;
      if (bl.kind == "normal") {
        write_normal_png(blend(read_normal_png(bl.dest), read_normal_png(bl.src), region, mode, bl.tol, &rep),
                         bl.out);
      } else {
        const RgbImage d = as_linear(read_rgb_png(bl.dest)), s = as_linear(read_rgb_png(bl.src));
        write_rgb_png(blend(d, s, region, mode, bl.tol, &rep), bl.out);
      }
      std::fprintf(stderr, "blend: %d iterations, relative residual %.3g\n", rep.iterations,
                   rep.relative_residual);
    } else if (*relight_cmd) {
      if (rl.env.empty() == rl.dirs.empty()) {
        std::cerr << "relight: give either --env or at least one --dir\n";
        return 2;
      }
      std::optional<EnvironmentLight> light;
      if (!rl.env.empty()) {
        RgbImage env = read_rgb_pfm(rl.env);
        if (rl.env_height > 0) env = downsample_latlong(env, rl.env_height);
        light = EnvironmentLight::from_latlong(std::move(env));
      } else {
        std::string spec = "dir:";
        for (std::size_t i = 0; i < rl.dirs.size(); ++i) spec += (i ? ";" : "") + rl.dirs[i];
        light = service::parse_directional_spec(spec);
        if (!light) {
          std::cerr << "relight: --dir expects x,y,z,r,g,b with a nonzero direction\n";
          return 2;
        }
      }
      RelitComposition comp;
      comp.albedo = as_linear(read_rgb_png(rl.albedo));
      comp.diffuse_gain = rl.kd;
      if (!rl.ks.empty()) {
        comp.specular_gains.clear();
        std::stringstream ss(rl.ks);
        for (std::string tok; std::getline(ss, tok, ',');) comp.specular_gains.push_back(std::stod(tok));
      }
      const NormalMap n = read_normal_png(rl.normal);
      write_rgb_png(compose_relit(light_maps(n, *light), comp), rl.out);
    } else if (*shade_cmd) {
      const RgbImage o = as_linear(read_rgb_png(sh.orig)), r = as_linear(read_rgb_png(sh.relit));
      write_shading_pfm(shading_map(o, r, sh.eps), sh.out);
    } else if (*apply_cmd) {
      write_rgb_png(apply_shading(read_shading_pfm(as.shading), as_linear(read_rgb_png(as.styled))), as.out);
    } else if (*hatch_cmd) {
      HeightField h = read_height_pfm(ht.height);
      h.mask = read_mask_or_all(ht.mask, h.width(), h.height());
      const RgbImage shading = fs::path(ht.shading).extension() == ".png" ? as_linear(read_rgb_png(ht.shading))
                                                                          : read_rgb_pfm(ht.shading);
      write_rgb_png(hatch(h, shading, ht.params).image, ht.out);
    } else if (*eval_cmd) {
      if (*eval_normals) {
        write_text(to_json(angular_error(read_normal_png(ev.a), read_normal_png(ev.b))), ev.out);
      } else {
        write_text(to_json(image_quality(read_rgb_png(ev.a), read_rgb_png(ev.b))), ev.out);
      }
    } else if (*serve_cmd) {
      sv.store = {session_root, max_dimension, cache_size};
      service::Server server(sv);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::fprintf(stderr, "narrate: serving on %s:%d, sessions in %s\n", sv.host.c_str(), sv.port,
                   session_root.c_str());
      if (!server.listen()) {
        std::fprintf(stderr, "narrate: cannot bind %s:%d\n", sv.host.c_str(), sv.port);
        return 1;
      }
      g_server = nullptr;
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what();
    if (!e.detail().empty()) std::cerr << " [" << e.detail() << "]";
    std::cerr << "\n";
    return 1;
  }
  return 0;
}
