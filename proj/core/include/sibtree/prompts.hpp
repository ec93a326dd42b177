// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sibtree {

class TemplateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Values substituted into a template.
///
/// Syntax understood by render_template():
///   {name}               scalar
///   {#list} ... {/list}  repeated per item; inside, {list[*]} is the item and
///                        {list.index} its 1-based position
///   {^list} ... {/list}  rendered only when the list is empty
///   {{ and }}            literal braces
/// Braces around anything that is not an identifier (e.g. "\boxed{...}") are
/// left untouched. A section tag alone on its line consumes that line.
struct PromptVars {
  std::map<std::string, std::string> scalars;
  std::map<std::string, std::vector<std::string>> lists;
};

std::string render_template(std::string_view text, const PromptVars& vars);

/// One versioned template file: "## key: value" header lines followed by
/// "[system]" and "[user]" sections.
struct PromptTemplate {
  std::string name;     // file name, e.g. "critique.v1.txt"
  std::string version;  // from the "## version:" header
  std::string system;
  std::string user;
  std::string hash;     // SHA-256 of the file bytes

  static PromptTemplate parse(std::string name, std::string_view file_text);
};

struct RenderedPrompt {
  std::string system;
  std::string user;
  std::string hash;  // SHA-256 over system + "\n\x1e\n" + user (record separator)
};

RenderedPrompt render(const PromptTemplate& tmpl, const PromptVars& vars);

/// The four capability templates.
struct PromptTemplates {
  PromptTemplate step;
  PromptTemplate critique;
  PromptTemplate revise;
  PromptTemplate blackbox;

  /// Templates compiled into the library from core/templates/.
  static PromptTemplates builtin();

  /// Loads step.*.txt, critique.*.txt, revise.*.txt and blackbox.*.txt from a
  /// directory (highest version per name wins). Throws TemplateError.
  static PromptTemplates load_dir(const std::filesystem::path& dir);

  /// name -> hash for every template, for manifests.
  std::map<std::string, std::string> hashes() const;
};

}  // namespace sibtree
