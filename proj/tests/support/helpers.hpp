#pragma once

#include "chatnet/backend.hpp"
#include "chatnet/dmc.hpp"
#include "chatnet/forward.hpp"
#include "chatnet/topology.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace chatnet::testing {

inline std::unique_ptr<ChatBackend> scripted(ScriptedPolicy policy, std::uint64_t seed = 0) {
    return make_backend(BackendBinding{ScriptedSettings{std::move(policy), seed}});
}

// One scripted session per node, policies given layer-major.
inline Network scripted_network(std::vector<int> widths, double rate, const std::vector<ScriptedPolicy>& policies,
                                std::uint64_t seed = 1) {
    NetworkTopology topo = build_network(std::move(widths), rate);
    std::vector<Session> sessions;
    for (std::size_t i = 0; i < topo.node_count(); ++i) {
        const NodeRef node = topo.nodes()[i];
        const std::string id = "network/" + node.to_string();
        sessions.emplace_back(id, scripted(policies.at(i), derive_seed(seed, id)));
    }
    return Network(std::move(topo), std::move(sessions));
}

inline Transcript user_turn(const std::string& text) {
    Transcript t("test");
    t.append(Role::user, text);
    return t;
}

inline std::filesystem::path fresh_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("chatnet-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace chatnet::testing
