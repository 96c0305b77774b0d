// Copyright 2026 The tracerl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tracerl/judge.hpp"

#include <cstdlib>

namespace tracerl {

std::filesystem::path default_asset_dir() {
  if (const char* env = std::getenv("TRACERL_ASSET_DIR")) return env;
#ifdef TRACERL_DEFAULT_ASSET_DIR
  return TRACERL_DEFAULT_ASSET_DIR;
#else
  return "data";
#endif
}

std::string ask_judge(const Judge& judge, const std::string& prompt_id,
                      const std::map<std::string, std::string>& values, const std::string& tag) {
  if (judge.client == nullptr || judge.prompts == nullptr) {
    throw JudgeError(JudgeError::Kind::JudgeUnavailable, "judge handle is not configured");
  }
  if (!judge.prompts->contains(prompt_id)) {
    throw JudgeError(JudgeError::Kind::UnknownPrompt, "unknown judge prompt " + prompt_id);
  }
  gateway::CompletionRequest req;
  req.endpoint_id = judge.endpoint_id;
  req.model_name = judge.model_name;
  req.messages = {{"user", trace::fill_template(judge.prompts->get(prompt_id), values)}};
  req.temperature = judge.temperature;
  req.max_tokens = judge.max_tokens;
  req.request_tag = tag;
  try {
    return judge.client->complete(req).text;
  } catch (const gateway::GatewayError& e) {
    throw JudgeError(JudgeError::Kind::JudgeUnavailable, e.what());
  }
}

}  // namespace tracerl
