/**
 * @file prompts.hpp
 * @brief Prompt templates with {{name}} placeholders.
 *
 * A template file has an optional "[system]" section followed by a "[user]"
 * section. The built-in set below mirrors the files in templates/; PromptSet::load
 * overrides any role for which a file exists in the given directory.
 *
 * Placeholders per template:
 *   uua          long_term, session
 *   nli          long_term, session, item
 *   nli_retry    (none)
 *   csa          user_summary, items
 *   csa_unscored user_summary, items
 *   ira          user_summary, context_summary, candidates
 *   baseline     history, candidates
 */

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "arag/error.hpp"
#include "arag/llm.hpp"

namespace arag {

class PromptTemplate {
 public:
  PromptTemplate() = default;

  /// Parses "[system]" / "[user]" sections. Throws DataError if the user
  /// section is missing.
  PromptTemplate(std::string name, std::string_view source) : name_(std::move(name)) {
    static constexpr std::string_view kSystem = "[system]\n";
    static constexpr std::string_view kUser = "[user]\n";
    std::string_view rest = source;
    if (rest.substr(0, kSystem.size()) == kSystem) {
      rest.remove_prefix(kSystem.size());
      const auto user_at = rest.find("\n[user]\n");
      if (user_at == std::string_view::npos) throw DataError("template " + name_ + ": missing [user] section");
      system_ = std::string(rest.substr(0, user_at));
      rest.remove_prefix(user_at + 1);
    }
    if (rest.substr(0, kUser.size()) != kUser) throw DataError("template " + name_ + ": missing [user] section");
    rest.remove_prefix(kUser.size());
    user_ = std::string(rest);
    while (!user_.empty() && user_.back() == '\n') user_.pop_back();
    source_ = std::string(source);
  }

  const std::string& name() const noexcept { return name_; }
  const std::string& source() const noexcept { return source_; }

  /// Placeholder names in order of first appearance.
  std::vector<std::string> placeholders() const {
    std::vector<std::string> out;
    for (const std::string* part : {&system_, &user_}) {
      std::size_t pos = 0;
      while ((pos = part->find("{{", pos)) != std::string::npos) {
        const auto close = part->find("}}", pos + 2);
        if (close == std::string::npos) break;
        std::string key = part->substr(pos + 2, close - pos - 2);
        if (std::find(out.begin(), out.end(), key) == out.end()) out.push_back(std::move(key));
        pos = close + 2;
      }
    }
    return out;
  }

  /// Substitutes every placeholder. Unknown or unfilled placeholders are errors.
  std::vector<ChatMessage> render(const std::map<std::string, std::string>& values) const {
    std::vector<ChatMessage> out;
    if (!system_.empty()) out.push_back({"system", fill(system_, values)});
    out.push_back({"user", fill(user_, values)});
    return out;
  }

 private:
  std::string fill(const std::string& text, const std::map<std::string, std::string>& values) const {
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (true) {
      const auto open = text.find("{{", pos);
      if (open == std::string::npos) break;
      const auto close = text.find("}}", open + 2);
      if (close == std::string::npos) break;
      const std::string key = text.substr(open + 2, close - open - 2);
      auto it = values.find(key);
      if (it == values.end()) throw DataError("template " + name_ + ": no value for placeholder {{" + key + "}}");
      out.append(text, pos, open - pos);
      out += it->second;
      pos = close + 2;
    }
    out.append(text, pos, std::string::npos);
    return out;
  }

  std::string name_;
  std::string source_;
  std::string system_;
  std::string user_;
};

namespace detail {

inline const std::vector<std::pair<std::string, std::string>>& builtin_template_sources() {
  static const std::vector<std::pair<std::string, std::string>> sources = {
    {"uua", R"tpl([system]
You are the User Understanding Agent of a recommendation system. You read a shopper's interaction history and describe their preferences.
[user]
Long-term history (older interactions, newest first):
{{long_term}}

Current session (most recent interactions, newest first):
{{session}}

Write a concise natural-language summary of this user's generic long-term interests and immediate goals in the current session. Mention concrete attributes such as categories, materials, styles and brands when the history supports them. Reply with the summary only.
)tpl"},
    {"nli", R"tpl([system]
You are the Natural Language Inference Agent of a recommendation system. You judge whether a candidate item supports or aligns with a shopper's inferred intent.
[user]
User context.
Long-term history (older interactions, newest first):
{{long_term}}

Current session (most recent interactions, newest first):
{{session}}

Candidate item:
{{item}}

Does this candidate item support or align with what the user is looking for? Reply with strict JSON only, no prose:
{"score": <number between 0 and 1>, "rationale": "<one sentence>"}
)tpl"},
    {"nli_retry", R"tpl([user]
Your previous reply could not be parsed. Reply again with only a JSON object of the form {"score": <number between 0 and 1>, "rationale": "<one sentence>"} and nothing else.
)tpl"},
    {"csa", R"tpl([system]
You are the Context Summary Agent of a recommendation system. You condense the evidence carried by candidate items that were judged relevant to a shopper.
[user]
User summary (use it as a relevance prior):
{{user_summary}}

Accepted candidate items, ordered by alignment score (higher means stronger alignment with the user):
{{items}}

Summarize what these items say about what the user is likely to want next. Weight each item by its alignment score and emphasize the attributes of high-scoring items. Reply with the summary only.
)tpl"},
    {"csa_unscored", R"tpl([system]
You are the Context Summary Agent of a recommendation system. You condense the evidence carried by candidate items for a shopper.
[user]
User summary (use it as a relevance prior):
{{user_summary}}

Candidate items, most similar to the user's history first:
{{items}}

Summarize what these items say about what the user is likely to want next, focusing on the items that fit the user summary and on the earlier items. Reply with the summary only.
)tpl"},
    {"ira", R"tpl([system]
You are the Item Ranker Agent of a recommendation system. You rank candidate items for a shopper by how likely the shopper is to purchase each one.
[user]
User summary:
{{user_summary}}

Context summary of relevant items:
{{context_summary}}

Candidate items:
{{candidates}}

Instructions:
1. Consider the user's behavior in previous sessions.
2. Consider the part of the user's history that is relevant to the current ranking task.
3. Examine the candidate items.
4. Rank the items in descending order of purchase likelihood.

Reply with strict JSON only, listing every candidate id exactly once, best first:
{"ranking": ["<item id>", ...], "explanation": "<brief justification>"}
)tpl"},
    {"baseline", R"tpl([system]
You are a recommendation assistant. You rank candidate items for a shopper by how likely the shopper is to purchase each one.
[user]
User history:
{{history}}

Candidate items:
{{candidates}}

Rank the candidate items in descending order of purchase likelihood for this user. Reply with strict JSON only, listing every candidate id exactly once, best first:
{"ranking": ["<item id>", ...], "explanation": "<brief justification>"}
)tpl"},
  };
  return sources;
}

}  // namespace detail

/// One template per agent role (plus the shared baseline template).
class PromptSet {
 public:
  /// The built-in templates.
  PromptSet() {
    for (const auto& [name, source] : detail::builtin_template_sources()) {
      templates_[name] = PromptTemplate(name, source);
    }
  }

  /// Built-ins overridden by "<name>.txt" files found in dir.
  static PromptSet load(const std::filesystem::path& dir) {
    PromptSet set;
    if (!std::filesystem::is_directory(dir)) throw DataError("template directory not found: " + dir.string());
    for (const auto& [name, source] : detail::builtin_template_sources()) {
      const auto path = dir / (name + ".txt");
      if (!std::filesystem::exists(path)) continue;
      std::ifstream in(path, std::ios::binary);
      std::ostringstream buf;
      buf << in.rdbuf();
      set.templates_[name] = PromptTemplate(name, buf.str());
    }
    return set;
  }

  static std::vector<std::string> names() {
    std::vector<std::string> out;
    for (const auto& [name, source] : detail::builtin_template_sources()) out.push_back(name);
    return out;
  }

  const PromptTemplate& get(const std::string& name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw DataError("no prompt template named " + name);
    return it->second;
  }

 private:
  std::map<std::string, PromptTemplate> templates_;
};

}  // namespace arag
