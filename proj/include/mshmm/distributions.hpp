#pragma once

// State-dependent distribution families. Parameters live on an unconstrained
// working scale; natural parameters are obtained through per-parameter links.

#include <random>
#include <span>
#include <string>
#include <vector>

#include "mshmm/ad.hpp"

namespace mshmm {

enum class Family { gamma, von_mises, negative_binomial, normal, poisson, bernoulli };
enum class Link { identity, log, logit };

std::string to_string(Family f);
std::string to_string(Link l);
Family family_from_string(const std::string& name);

struct FamilyParam {
  const char* name;
  Link link;
};

/// Natural parameters of a family in storage order:
///   gamma: shape, scale             von_mises: mean, concentration
///   negative_binomial: size, mean   normal: mean, sd
///   poisson: mean                   bernoulli: prob
std::span<const FamilyParam> family_params(Family f);

double apply_link_inverse(Link l, double w);
double apply_link(Link l, double natural);

/// log p(x | natural parameters).
double log_density(Family f, std::span<const double> natural, double x);

/// log p(x | working parameters) and its gradient with respect to them.
double log_density_working(Family f, std::span<const double> working, double x,
                           std::span<double> grad);

/// Tape version on the working scale, used as an independent route for
/// checking the analytic scores.
ad::Var log_density_working(Family f, std::span<const ad::Var> working, double x);

/// Density (or mass) on the natural scale; missing x gives 1.
double state_density(Family f, std::span<const double> natural, double x);

double sample(Family f, std::span<const double> natural, std::mt19937_64& rng);

/// Von Mises draw (Best-Fisher), mean mu and concentration kappa, in (-pi, pi].
double sample_von_mises(double mu, double kappa, std::mt19937_64& rng);

}  // namespace mshmm
