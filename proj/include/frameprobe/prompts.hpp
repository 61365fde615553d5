#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>

namespace frameprobe {

/// Prompt texts for one variant. Placeholders: `{caption}` in `caption`,
/// `{A}`..`{D}` in `mcqa`.
struct PromptTemplates {
  std::string image;        // one frame
  std::string image_multi;  // several frames of the same movie
  std::string caption;
  std::string mcqa;
};

/// Versioned set of prompt variants keyed by id. The default variant is the
/// neutral evaluation prompt.
class PromptRegistry {
 public:
  static PromptRegistry builtin();
  static PromptRegistry parse(std::string_view json_text);
  static PromptRegistry load(const std::filesystem::path& path);

  const PromptTemplates& get(std::string_view id) const;
  bool contains(std::string_view id) const { return variants_.contains(std::string(id)); }
  int version() const { return version_; }
  std::string to_json() const;

 private:
  int version_ = 1;
  std::map<std::string, PromptTemplates> variants_;
};

std::string render_image_prompt(const PromptTemplates& t, int frames);
std::string render_caption_prompt(const PromptTemplates& t, std::string_view caption);
std::string render_mcqa_prompt(const PromptTemplates& t, std::span<const std::string> options);

}  // namespace frameprobe
