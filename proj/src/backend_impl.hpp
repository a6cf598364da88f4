#pragma once

#include "chatnet/backend.hpp"

namespace chatnet::detail {

std::unique_ptr<ChatBackend> make_http_backend(const HttpSettings& settings);
std::unique_ptr<ChatBackend> make_scripted_backend(const ScriptedSettings& settings);

} // namespace chatnet::detail
