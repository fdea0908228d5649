#pragma once

#include <memory>
#include <stdexcept>
#include <string>

#include "microracer/agents/ddpg.hpp"
#include "microracer/agents/dsac.hpp"
#include "microracer/agents/ppo.hpp"
#include "microracer/agents/sac.hpp"
#include "microracer/agents/td3.hpp"

namespace microracer::agents {

inline const std::vector<std::string>& known_algorithms() {
    static const std::vector<std::string> algos = {"ddpg", "ddpg2", "td3", "sac", "dsac", "ppo"};
    return algos;
}

inline std::unique_ptr<Agent> make_agent(const std::string& algo, const Hyperparams& hp,
                                         std::uint64_t seed) {
    if (algo == "ddpg") return std::make_unique<DdpgAgent>(hp, seed, false);
    if (algo == "ddpg2") return std::make_unique<DdpgAgent>(hp, seed, true);
    if (algo == "td3") return std::make_unique<Td3Agent>(hp, seed);
    if (algo == "sac") return std::make_unique<SacAgent>(hp, seed);
    if (algo == "dsac") return std::make_unique<DsacAgent>(hp, seed);
    if (algo == "ppo") return std::make_unique<PpoAgent>(hp, seed);
    throw std::invalid_argument("unknown algorithm: " + algo);
}

inline std::unique_ptr<Agent> agent_from_checkpoint(const nlohmann::json& j) {
    if (j.value("format", "") != "microracer-checkpoint-v1")
        throw std::invalid_argument("unsupported checkpoint format");
    auto agent = make_agent(j.at("algo").get<std::string>(), Hyperparams{}, 0);
    agent->load(j);
    return agent;
}

}  // namespace microracer::agents
