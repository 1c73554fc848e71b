#include "supmae/train/loss_check.hpp"

#include "supmae/data/batch.hpp"
#include "supmae/data/mask.hpp"
#include "supmae/data/patch.hpp"
#include "supmae/train/steps.hpp"

namespace supmae::train {

diff::GradCheckReport full_loss_gradcheck(std::uint64_t seed, double tol, double step) {
  model::ModelConfig cfg;
  cfg.image_h = cfg.image_w = 16;
  cfg.patch_size = 4;
  cfg.embed_dim = 32;
  cfg.depth = 2;
  cfg.heads = 4;
  cfg.decoder_dim = 16;
  cfg.decoder_depth = 1;
  cfg.decoder_heads = 2;
  cfg.num_classes = 3;
  const auto params = model::init_params<double>(cfg, seed);
  Rng rng = Rng::derive(seed, Stream::toydata, {0xC4EC});
  std::vector<data::PatchGrid> grids;
  std::vector<data::MaskPlan> plans;
  const std::vector<int> labels{0, 2};
  for (std::uint64_t b = 0; b < 2; ++b) {
    data::Image img(16, 16, 1);
    for (auto& v : img.pixels) v = static_cast<float>(rng.uniform());
    grids.push_back(data::patchify(img, 4));
    plans.push_back(data::plan_for(seed, 0, b, 16, 0.75));
  }
  const auto batch = data::make_batch(grids, plans, labels);
  objectives::LossWeights w;
  w.lambda_cls = 0.5;
  diff::NamedTensors<double> named;
  for (const auto& e : params.entries())
    if (e.kind == model::ParamKind::trainable) named.emplace_back(e.name, e.value);
  const auto wide = params.cast<long double>();
  diff::GradCheckOptions opt;
  opt.refine = [&](diff::Graph<long double>& g, const diff::Leaves<long double>& leaves) {
    model::ParamBinding<long double> p(g, wide, leaves);
    return pretrain_forward(p, cfg, batch, w, true).total;
  };
  return diff::grad_check(
      [&](diff::Graph<double>& g, const diff::Leaves<double>& leaves) {
        model::ParamBinding<double> p(g, params, leaves);
        return pretrain_forward(p, cfg, batch, w, true).total;
      },
      named, step, tol, opt);
}

}  // namespace supmae::train
