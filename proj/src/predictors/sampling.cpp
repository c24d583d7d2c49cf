#include "pgr2m/predictors/sampling.hpp"

#include <cmath>

#include "pgr2m/error.hpp"

namespace pgr2m::pred {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

SampleMode parse_sample_mode(std::string_view s) {
  if (s == "deterministic") return SampleMode::deterministic;
  if (s == "stochastic") return SampleMode::stochastic;
  throw ValidationError("mode must be deterministic or stochastic, got '" + std::string(s) + "'");
}

std::string_view to_string(SampleMode m) { return m == SampleMode::deterministic ? "deterministic" : "stochastic"; }

void repair_families(const pose::Catalog& catalog, const std::vector<double>& probabilities,
                     std::vector<std::uint8_t>& active) {
  for (std::size_t f = 0; f < catalog.families().size(); ++f) {
    if (!catalog.exclusive(f)) continue;
    const auto& members = catalog.members(f);
    std::size_t count = 0, best = members.front();
    for (std::size_t n : members) {
      count += active[n];
      if (probabilities[n] > probabilities[best]) best = n;
    }
    if (count == 1) continue;
    // Among several active codes keep the most probable active one.
    if (count > 1) {
      best = members.front();
      bool found = false;
      for (std::size_t n : members) {
        if (active[n] && (!found || probabilities[n] > probabilities[best])) best = n, found = true;
      }
    }
    for (std::size_t n : members) active[n] = n == best;
  }
}

pose::PoseCodeSequence sample_pose_codes(const BaseTransformer& model, const pose::Catalog& catalog,
                                         const TextInput& text, const SampleOptions& options, nn::Rng& rng) {
  const std::size_t N = model.codes();
  if (catalog.size() != N) throw DimensionError("catalog size differs from the base model's code count");
  if (options.mode == SampleMode::stochastic && !(options.temperature > 0)) {
    throw ConfigError("temperature must be positive");
  }
  pose::PoseCodeSequence z(0, N);
  while (z.steps < model.config().max_steps) {
    const Tensor logits = model.next_logits(text, z);
    std::vector<double> p(N + 1);
    std::vector<std::uint8_t> on(N + 1);
    for (std::size_t n = 0; n <= N; ++n) {
      if (options.mode == SampleMode::deterministic) {
        p[n] = sigmoid(logits[n]);
        on[n] = p[n] >= 0.5;
      } else {
        p[n] = sigmoid(logits[n] / options.temperature);
        on[n] = nn::uniform01(rng) < p[n];
      }
    }
    if (on[N]) break;
    on.pop_back();
    p.pop_back();
    repair_families(catalog, p, on);
    z.bits.insert(z.bits.end(), on.begin(), on.end());
    ++z.steps;
  }
  return z;
}

ResidualCodes sample_residual_codes(const RefineTransformer& model, const TextInput& text,
                                    const pose::PoseCodeSequence& pose, const SampleOptions& options, nn::Rng& rng) {
  const std::size_t S = model.config().stages, Nr = model.config().residual_codes;
  ResidualCodes out;
  for (std::size_t s = 0; s < S; ++s) {
    Tape t(false);
    const Tensor logits = model.forward(t, {text}, {&pose}, {&out}, s).value();
    std::vector<std::size_t> row(pose.steps);
    for (std::size_t i = 0; i < pose.steps; ++i) {
      const nn::Scalar* l = logits.data() + i * Nr;
      if (options.mode == SampleMode::deterministic) {
        row[i] = static_cast<std::size_t>(std::max_element(l, l + Nr) - l);
      } else {
        const double mx = *std::max_element(l, l + Nr);
        std::vector<double> w(Nr);
        double z = 0.0;
        for (std::size_t k = 0; k < Nr; ++k) z += w[k] = std::exp((l[k] - mx) / options.temperature);
        double u = nn::uniform01(rng) * z;
        std::size_t k = 0;
        while (k + 1 < Nr && u >= w[k]) u -= w[k++];
        row[i] = k;
      }
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace pgr2m::pred
