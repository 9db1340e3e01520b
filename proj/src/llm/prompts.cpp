// SPDX-License-Identifier: Apache-2.0

#include "seedforge/llm/prompts.hpp"

#include <algorithm>

#include "seedforge/common/error.hpp"
#include "seedforge/common/util.hpp"

namespace seedforge::llm {

namespace {

constexpr std::string_view kFeatureAnalysis =
    R"(You are an expert on the {{format}} file format and on the Python libraries that read and write it.
List the features a {{format}} file can have: capabilities, encodings, compression schemes, optional sections, metadata and any other attribute that changes how the file is laid out on disk.
Do not restrict yourself to the most common features.
Answer with a numbered list, one feature per line, in the form:
1. <feature name>: <one-sentence description>
)";

constexpr std::string_view kCreateGenerator =
    R"(Write a Python 3 program that creates {{format}} files exhibiting the following feature:
{{feature}}

Requirements:
- The program runs without arguments or user interaction.
- It writes the generated files into the current working directory, using the usual file extension for {{format}}.
- Prefer a well-known library for {{format}}; if none supports the feature, build the bytes directly (for example with the struct module).
Reply with the complete program in a single fenced code block.
)";

constexpr std::string_view kExtractLibrary =
    R"(Running a Python program failed with the following error:
{{error_info}}

Which package has to be installed with pip to fix this error? Reply with the package name only.
)";

constexpr std::string_view kRareFeatureExtraction =
    R"(The following features of the {{format}} file format are already covered:
{{known_features}}

List further features of {{format}} that are missing from the list above, especially rarely used ones.
Answer with a numbered list, one feature per line, in the form:
1. <feature name>: <one-sentence description>
)";

constexpr std::string_view kRareFeatureMutation =
    R"(The Python program below generates {{format}} files.
```python
{{generator}}
```

Modify it so the generated files additionally exhibit the following feature, keeping every feature they already have:
{{feature}}

The program must still write its files into the current working directory.
Reply with the complete modified program in a single fenced code block.
)";

constexpr std::string_view kHavocMutation =
    R"(The Python program below generates {{format}} files.
```python
{{generator}}
```

Mutate it so the generated files contain one additional {{axis}} of the {{format}} format, of your choice, alongside everything they already contain. Pick a {{axis}} the program does not produce yet.

The program must still write its files into the current working directory.
Reply with the complete mutated program in a single fenced code block.
)";

constexpr std::string_view kPatternMutation =
    R"(The following pair shows a useful mutation of a {{format}} generator: files from the mutated program reached new code in the program under test.

Original program:
```python
{{original}}
```

Mutated program:
```python
{{mutated}}
```

Learn the mutation pattern from this pair and apply it to the program below.
```python
{{generator}}
```

The program must still write its files into the current working directory.
Reply with the complete mutated program in a single fenced code block.
)";

constexpr std::string_view kRegenerate =
    R"({{error_info}}
Regenerate the complete program so that it runs without this error. Reply with the program in a single fenced code block.
)";

std::size_t slot(PromptKind kind) { return static_cast<std::size_t>(kind); }

}  // namespace

std::vector<std::string> referenced_placeholders(std::string_view body) {
  std::vector<std::string> names;
  std::size_t pos = 0;
  while ((pos = body.find("{{", pos)) != std::string_view::npos) {
    auto end = body.find("}}", pos + 2);
    if (end == std::string_view::npos) break;
    std::string name(body.substr(pos + 2, end - pos - 2));
    if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
    pos = end + 2;
  }
  return names;
}

const std::vector<std::string>& PromptLibrary::declared_placeholders(PromptKind kind) {
  static const std::vector<std::string> kFormat{"format"};
  static const std::vector<std::string> kFormatFeature{"format", "feature"};
  static const std::vector<std::string> kErrorInfo{"error_info"};
  static const std::vector<std::string> kFormatKnown{"format", "known_features"};
  static const std::vector<std::string> kFormatGenFeature{"format", "generator", "feature"};
  static const std::vector<std::string> kFormatGenAxis{"format", "generator", "axis"};
  static const std::vector<std::string> kPattern{"format", "generator", "original", "mutated"};
  switch (kind) {
    case PromptKind::FeatureAnalysis: return kFormat;
    case PromptKind::CreateGenerator: return kFormatFeature;
    case PromptKind::ExtractLibrary: return kErrorInfo;
    case PromptKind::RareFeatureExtraction: return kFormatKnown;
    case PromptKind::RareFeatureMutation: return kFormatGenFeature;
    case PromptKind::HavocMutation: return kFormatGenAxis;
    case PromptKind::PatternMutation: return kPattern;
    case PromptKind::Regenerate: return kErrorInfo;
  }
  return kFormat;
}

std::string_view PromptLibrary::builtin_body(PromptKind kind) {
  switch (kind) {
    case PromptKind::FeatureAnalysis: return kFeatureAnalysis;
    case PromptKind::CreateGenerator: return kCreateGenerator;
    case PromptKind::ExtractLibrary: return kExtractLibrary;
    case PromptKind::RareFeatureExtraction: return kRareFeatureExtraction;
    case PromptKind::RareFeatureMutation: return kRareFeatureMutation;
    case PromptKind::HavocMutation: return kHavocMutation;
    case PromptKind::PatternMutation: return kPatternMutation;
    case PromptKind::Regenerate: return kRegenerate;
  }
  return {};
}

PromptLibrary PromptLibrary::builtin() {
  PromptLibrary library;
  for (auto kind : kAllPromptKinds) library.bodies_[slot(kind)] = std::string(builtin_body(kind));
  return library;
}

PromptLibrary PromptLibrary::load(const std::filesystem::path& dir) {
  auto library = builtin();
  for (auto kind : kAllPromptKinds) {
    auto file = dir / (std::string(to_string(kind)) + ".txt");
    if (!std::filesystem::exists(file)) continue;
    auto body = read_file(file);
    // A leading "# SPDX-License-Identifier" line is file metadata, not prompt text.
    if (body.rfind("# SPDX-License-Identifier", 0) == 0) {
      const auto eol = body.find('\n');
      body.erase(0, eol == std::string::npos ? body.size() : eol + 1);
    }
    library.set(kind, std::move(body));
  }
  return library;
}

void PromptLibrary::set(PromptKind kind, std::string body) {
  const auto& declared = declared_placeholders(kind);
  for (const auto& name : referenced_placeholders(body)) {
    if (std::find(declared.begin(), declared.end(), name) == declared.end()) {
      throw Error(ErrorKind::InvalidTemplate,
                  std::string(to_string(kind)) + " references undeclared placeholder '" + name + "'");
    }
  }
  bodies_[slot(kind)] = std::move(body);
}

const std::string& PromptLibrary::body(PromptKind kind) const { return bodies_[slot(kind)]; }

std::string PromptLibrary::render(PromptKind kind, const Bindings& bindings) const {
  const std::string& source = body(kind);
  std::string out;
  out.reserve(source.size());
  std::size_t pos = 0;
  while (true) {
    auto open = source.find("{{", pos);
    auto close = open == std::string::npos ? std::string::npos : source.find("}}", open + 2);
    if (close == std::string::npos) {
      out.append(source, pos, std::string::npos);
      break;
    }
    out.append(source, pos, open - pos);
    std::string_view name(source.data() + open + 2, close - open - 2);
    auto it = bindings.find(name);
    if (it == bindings.end()) throw Error(ErrorKind::MissingBinding, std::string(name));
    out += it->second;
    pos = close + 2;
  }
  return out;
}

std::string PromptLibrary::render(std::string_view template_id, const Bindings& bindings) const {
  auto kind = prompt_kind_from_string(template_id);
  if (!kind) throw Error(ErrorKind::UnknownTemplate, std::string(template_id));
  return render(*kind, bindings);
}

}  // namespace seedforge::llm
