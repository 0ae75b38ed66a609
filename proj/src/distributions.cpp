#include "mshmm/distributions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "mshmm/errors.hpp"

namespace mshmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kTwoPi = 2.0 * std::numbers::pi;

constexpr std::array<FamilyParam, 2> kGamma{{{"shape", Link::log}, {"scale", Link::log}}};
constexpr std::array<FamilyParam, 2> kVonMises{
    {{"mean", Link::identity}, {"concentration", Link::log}}};
constexpr std::array<FamilyParam, 2> kNegBin{{{"size", Link::log}, {"mean", Link::log}}};
constexpr std::array<FamilyParam, 2> kNormal{{{"mean", Link::identity}, {"sd", Link::log}}};
constexpr std::array<FamilyParam, 1> kPoisson{{{"mean", Link::log}}};
constexpr std::array<FamilyParam, 1> kBernoulli{{{"prob", Link::logit}}};

bool is_count(double x) { return x >= 0.0 && std::floor(x) == x; }

double log1pexp(double w) { return w > 0 ? w + std::log1p(std::exp(-w)) : std::log1p(std::exp(w)); }

}  // namespace

std::string to_string(Family f) {
  switch (f) {
    case Family::gamma:
      return "gamma";
    case Family::von_mises:
      return "von_mises";
    case Family::negative_binomial:
      return "negative_binomial";
    case Family::normal:
      return "normal";
    case Family::poisson:
      return "poisson";
    case Family::bernoulli:
      return "bernoulli";
  }
  return "?";
}

std::string to_string(Link l) {
  switch (l) {
    case Link::identity:
      return "identity";
    case Link::log:
      return "log";
    case Link::logit:
      return "logit";
  }
  return "?";
}

Family family_from_string(const std::string& name) {
  for (Family f : {Family::gamma, Family::von_mises, Family::negative_binomial, Family::normal,
                   Family::poisson, Family::bernoulli}) {
    if (to_string(f) == name) return f;
  }
  if (name == "vm") return Family::von_mises;
  if (name == "negbin" || name == "nbinom") return Family::negative_binomial;
  throw InvalidInput("unknown family '" + name + "'");
}

std::span<const FamilyParam> family_params(Family f) {
  switch (f) {
    case Family::gamma:
      return kGamma;
    case Family::von_mises:
      return kVonMises;
    case Family::negative_binomial:
      return kNegBin;
    case Family::normal:
      return kNormal;
    case Family::poisson:
      return kPoisson;
    case Family::bernoulli:
      return kBernoulli;
  }
  return {};
}

double apply_link_inverse(Link l, double w) {
  switch (l) {
    case Link::identity:
      return w;
    case Link::log:
      return std::exp(w);
    case Link::logit:
      return 1.0 / (1.0 + std::exp(-w));
  }
  return w;
}

double apply_link(Link l, double natural) {
  switch (l) {
    case Link::identity:
      return natural;
    case Link::log:
      return std::log(natural);
    case Link::logit:
      return std::log(natural / (1.0 - natural));
  }
  return natural;
}

double log_density(Family f, std::span<const double> p, double x) {
  switch (f) {
    case Family::gamma: {
      const double a = p[0], s = p[1];
      if (!(a > 0 && s > 0)) throw InvalidInput("gamma: invalid parameters");
      if (!(x > 0)) return kNegInf;
      return (a - 1.0) * std::log(x) - x / s - std::lgamma(a) - a * std::log(s);
    }
    case Family::von_mises: {
      const double mu = p[0], kappa = p[1];
      if (!(kappa >= 0)) throw InvalidInput("von_mises: invalid concentration");
      return kappa * std::cos(x - mu) - std::log(kTwoPi) - log_bessel_i0(kappa);
    }
    case Family::negative_binomial: {
      const double r = p[0], m = p[1];
      if (!(r > 0 && m > 0)) throw InvalidInput("negative_binomial: invalid parameters");
      if (!is_count(x)) return kNegInf;
      return std::lgamma(x + r) - std::lgamma(r) - std::lgamma(x + 1.0) +
             r * std::log(r / (r + m)) + x * std::log(m / (r + m));
    }
    case Family::normal: {
      const double mu = p[0], sd = p[1];
      if (!(sd > 0)) throw InvalidInput("normal: invalid sd");
      const double z = (x - mu) / sd;
      return -0.5 * z * z - std::log(sd) - 0.5 * std::log(kTwoPi);
    }
    case Family::poisson: {
      const double lam = p[0];
      if (!(lam > 0)) throw InvalidInput("poisson: invalid mean");
      if (!is_count(x)) return kNegInf;
      return x * std::log(lam) - lam - std::lgamma(x + 1.0);
    }
    case Family::bernoulli: {
      const double pr = p[0];
      if (!(pr > 0 && pr < 1)) throw InvalidInput("bernoulli: invalid probability");
      if (x == 1.0) return std::log(pr);
      if (x == 0.0) return std::log1p(-pr);
      return kNegInf;
    }
  }
  return kNegInf;
}

double log_density_working(Family f, std::span<const double> w, double x, std::span<double> g) {
  switch (f) {
    case Family::gamma: {
      const double a = std::exp(w[0]), s = std::exp(w[1]);
      if (!(x > 0)) {
        g[0] = g[1] = 0.0;
        return kNegInf;
      }
      const double lx = std::log(x);
      g[0] = a * (lx - digamma(a) - w[1]);
      g[1] = x / s - a;
      return (a - 1.0) * lx - x / s - std::lgamma(a) - a * w[1];
    }
    case Family::von_mises: {
      const double mu = w[0], kappa = std::exp(w[1]);
      const double c = std::cos(x - mu);
      g[0] = kappa * std::sin(x - mu);
      g[1] = kappa * (c - bessel_ratio_i1_i0(kappa));
      return kappa * c - std::log(kTwoPi) - log_bessel_i0(kappa);
    }
    case Family::negative_binomial: {
      const double r = std::exp(w[0]), m = std::exp(w[1]);
      if (!is_count(x)) {
        g[0] = g[1] = 0.0;
        return kNegInf;
      }
      const double lrm = std::log(r + m);
      g[0] = r * (digamma(x + r) - digamma(r) + w[0] - lrm + (m - x) / (r + m));
      g[1] = r * (x - m) / (r + m);
      return std::lgamma(x + r) - std::lgamma(r) - std::lgamma(x + 1.0) + r * (w[0] - lrm) +
             x * (w[1] - lrm);
    }
    case Family::normal: {
      const double mu = w[0], sd = std::exp(w[1]);
      const double z = (x - mu) / sd;
      g[0] = z / sd;
      g[1] = z * z - 1.0;
      return -0.5 * z * z - w[1] - 0.5 * std::log(kTwoPi);
    }
    case Family::poisson: {
      const double lam = std::exp(w[0]);
      if (!is_count(x)) {
        g[0] = 0.0;
        return kNegInf;
      }
      g[0] = x - lam;
      return x * w[0] - lam - std::lgamma(x + 1.0);
    }
    case Family::bernoulli: {
      if (x != 0.0 && x != 1.0) {
        g[0] = 0.0;
        return kNegInf;
      }
      const double pr = 1.0 / (1.0 + std::exp(-w[0]));
      g[0] = x - pr;
      return x * w[0] - log1pexp(w[0]);
    }
  }
  return kNegInf;
}

ad::Var log_density_working(Family f, std::span<const ad::Var> w, double x) {
  using ad::Var;
  switch (f) {
    case Family::gamma: {
      if (!(x > 0)) return Var(kNegInf);
      const Var a = ad::exp(w[0]);
      const Var s = ad::exp(w[1]);
      return (a - 1.0) * std::log(x) - x / s - ad::lgamma(a) - a * w[1];
    }
    case Family::von_mises: {
      const Var kappa = ad::exp(w[1]);
      return kappa * ad::cos(x - w[0]) - std::log(kTwoPi) - ad::log_bessel_i0(kappa);
    }
    case Family::negative_binomial: {
      if (!is_count(x)) return Var(kNegInf);
      const Var r = ad::exp(w[0]);
      const Var m = ad::exp(w[1]);
      const Var lrm = ad::log(r + m);
      return ad::lgamma(x + r) - ad::lgamma(r) - std::lgamma(x + 1.0) + r * (w[0] - lrm) +
             x * (w[1] - lrm);
    }
    case Family::normal: {
      const Var z = (x - w[0]) / ad::exp(w[1]);
      return -0.5 * z * z - w[1] - 0.5 * std::log(kTwoPi);
    }
    case Family::poisson: {
      if (!is_count(x)) return Var(kNegInf);
      return x * w[0] - ad::exp(w[0]) - std::lgamma(x + 1.0);
    }
    case Family::bernoulli: {
      if (x != 0.0 && x != 1.0) return Var(kNegInf);
      return x * w[0] - ad::log1p(ad::exp(w[0]));
    }
  }
  return Var(kNegInf);
}

double state_density(Family f, std::span<const double> natural, double x) {
  if (std::isnan(x)) return 1.0;
  return std::exp(log_density(f, natural, x));
}

double sample_von_mises(double mu, double kappa, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double theta;
  if (kappa < 1e-8) {
    theta = kTwoPi * unif(rng) - std::numbers::pi;
  } else {
    const double tau = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
    const double rho = (tau - std::sqrt(2.0 * tau)) / (2.0 * kappa);
    const double r = (1.0 + rho * rho) / (2.0 * rho);
    double f;
    while (true) {
      const double u1 = unif(rng), u2 = unif(rng);
      const double z = std::cos(std::numbers::pi * u1);
      f = (1.0 + r * z) / (r + z);
      const double c = kappa * (r - f);
      if (c * (2.0 - c) - u2 > 0.0 || std::log(c / u2) + 1.0 - c >= 0.0) break;
    }
    const double u3 = unif(rng);
    theta = (u3 > 0.5 ? 1.0 : -1.0) * std::acos(std::clamp(f, -1.0, 1.0));
  }
  double x = std::remainder(theta + mu, kTwoPi);
  if (x <= -std::numbers::pi) x += kTwoPi;
  return x;
}

double sample(Family f, std::span<const double> p, std::mt19937_64& rng) {
  switch (f) {
    case Family::gamma:
      return std::gamma_distribution<double>(p[0], p[1])(rng);
    case Family::von_mises:
      return sample_von_mises(p[0], p[1], rng);
    case Family::negative_binomial: {
      const double lam = std::gamma_distribution<double>(p[0], p[1] / p[0])(rng);
      return static_cast<double>(std::poisson_distribution<long long>(lam)(rng));
    }
    case Family::normal:
      return std::normal_distribution<double>(p[0], p[1])(rng);
    case Family::poisson:
      return static_cast<double>(std::poisson_distribution<long long>(p[0])(rng));
    case Family::bernoulli:
      return std::bernoulli_distribution(p[0])(rng) ? 1.0 : 0.0;
  }
  return 0.0;
}

}  // namespace mshmm
