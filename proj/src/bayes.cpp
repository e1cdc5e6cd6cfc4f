#include "trapdoor/detection.hpp"
#include "trapdoor/error.hpp"

namespace trapdoor::detect {

BayesModel BayesModel::defaults() {
  using namespace rule_id;
  BayesModel m;
  m.prior_attack = 0.05;
  m.alarm_threshold = 0.9;
  m.likelihoods = {
      {std::string(kReservedNonzero), {0.6, 0.001}},  {std::string(kIllegalFlagCombo), {0.3, 0.005}},
      {std::string(kUrgInconsistent), {0.2, 0.005}},  {std::string(kIsnLow24Zero), {0.9, 0.0001}},
      {std::string(kDataPastEol), {0.6, 0.0005}},     {std::string(kBadTcpChecksum), {0.1, 0.01}},
      {std::string(kFragmentedIp), {0.1, 0.02}},      {std::string(kPayloadSignature), {0.5, 0.01}},
      {std::string(kIsnDistribution), {0.8, 0.01}},   {std::string(kFlagDist), {0.3, 0.01}},
      {std::string(kIpidConstant), {0.4, 0.05}},      {std::string(kMalformedRecord), {0.2, 0.01}},
      {std::string(kInvalidSignature), {0.3, 0.01}},  {std::string(kSubliminalNonces), {0.95, 0.003}},
      {std::string(kNonrandomKey), {0.7, 0.01}},
  };
  return m;
}

void BayesModel::validate() const {
  auto prob = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!prob(prior_attack)) throw Error(Errc::ConfigError, "prior_attack must be in [0, 1]");
  if (!(alarm_threshold > 0.0 && alarm_threshold <= 1.0))
    throw Error(Errc::ConfigError, "alarm_threshold must be in (0, 1]");
  for (const auto& [id, l] : likelihoods)
    if (!prob(l.given_attack) || !prob(l.given_benign))
      throw Error(Errc::ConfigError, "likelihoods for " + id + " must be in [0, 1]");
}

double bayes_posterior(const BayesModel& model, const std::set<std::string>& symptoms_present) {
  double attack = 1.0;
  double benign = 1.0;
  for (const auto& s : symptoms_present) {
    auto it = model.likelihoods.find(s);
    if (it == model.likelihoods.end()) throw Error(Errc::UnknownSymptom, s);
    attack *= it->second.given_attack;
    benign *= it->second.given_benign;
  }
  if (model.prior_attack <= 0.0) return 0.0;
  const double num = model.prior_attack * attack;
  const double den = num + (1.0 - model.prior_attack) * benign;
  // 0/0 only when every hypothesis is ruled out; fall back on the prior.
  if (den == 0.0) return model.prior_attack;
  return num / den;
}

std::optional<Alarm> evaluate_alarm(const BayesModel& model, double posterior, Alarm candidate,
                                    std::vector<Alarm>& sink) {
  if (!(posterior > model.alarm_threshold)) return std::nullopt;
  candidate.posterior = posterior;
  sink.push_back(candidate);
  return candidate;
}

}  // namespace trapdoor::detect
