#pragma once

#include "loop/amdp.hpp"
#include "loop/hypothesis.hpp"

#include <memory>
#include <string>

namespace loop {

enum class InstanceKind { TabularRandom, TwoStateCycle, LinearAmdp, LinearMixture };

std::string to_string(InstanceKind kind);
InstanceKind parse_instance_kind(const std::string& text);

struct InstanceSpec {
    InstanceKind kind = InstanceKind::TabularRandom;
    std::size_t n_states = 5;
    std::size_t n_actions = 3;
    std::size_t feature_dim = 2;
    std::uint64_t seed = 1;
    double reward_min = -1.0;
    double reward_max = 1.0;
    /// every transition entry is raised to at least this mass before renormalizing
    double mixing_floor = 0.0;

    void validate() const;
};

/// Linear AMDP: P(.|s,a) = <phi(s,a), mu(.)>, r(s,a) = <phi(s,a), theta>.
struct LinearAmdpFeatures {
    Matrix phi;    ///< (S*A) x d, first column all ones
    Matrix mu;     ///< d x S signed measures
    Vector theta;  ///< d
};

struct LinearAmdpInstance {
    TabularAMDP model;
    LinearAmdpFeatures features;
};

struct LinearMixtureInstance {
    TabularAMDP model;
    std::shared_ptr<const LinearMixtureFeatures> features;
    Vector theta;
};

TabularAMDP random_communicating_tabular(const InstanceSpec& spec);
TabularAMDP two_state_cycle();

LinearAmdpInstance linear_amdp_instance(const InstanceSpec& spec);
LinearMixtureInstance linear_mixture_instance(const InstanceSpec& spec);

/// Builds the tabular model of a linear AMDP; throws InvalidModel when the
/// rows are not kernels or rewards leave [-1, 1].
TabularAMDP materialize_linear_amdp(const LinearAmdpFeatures& features, std::size_t n_states,
                                    std::size_t n_actions, double span_bound);

/// omega with Q* = Phi omega, i.e. theta + mu V* - J* e_1.
Vector linear_q_parameter(const LinearAmdpFeatures& features, const SolveResult& solution);

/// Dispatch on InstanceSpec::kind; linear kinds drop their features.
TabularAMDP generate_instance(const InstanceSpec& spec);

nlohmann::json to_json(const LinearAmdpInstance& inst);
nlohmann::json to_json(const LinearMixtureInstance& inst);

/// Reads the "features" section written by to_json; the caller checks the kind.
LinearAmdpInstance linear_amdp_from_json(const nlohmann::json& doc);
LinearMixtureInstance linear_mixture_from_json(const nlohmann::json& doc);

} // namespace loop
