#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mmia/gateway.hpp"
#include "mmia/json_util.hpp"

namespace mmia {

using Bindings = std::map<std::string, std::string>;

// Substitutes {{name}} placeholders. Throws template_error when a
// placeholder has no binding or the template id is unknown.
std::string render_prompt(std::string_view template_id, const Bindings& bindings);
std::string render_template(std::string_view text, const Bindings& bindings);

std::vector<std::string> prompt_template_ids();
const std::string& prompt_template(std::string_view template_id);

std::string system_prompt(Role role);

// Machine-readable payload embedded in every engine prompt so structured
// backends can answer without scraping prose.
std::string context_block(const json& context);
// Returns the payload of the first <context> block; protocol_error if absent.
json parse_context(std::string_view prompt);

// Audit prompt variants used for consensus diversity.
inline constexpr int kAuditPromptVariants = 3;

}  // namespace mmia
