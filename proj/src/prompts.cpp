#include "frameprobe/prompts.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "frameprobe/error.hpp"

namespace frameprobe {

using nlohmann::json;

namespace {

constexpr std::string_view kGuessOnlyName = "Your guess must be only the movie name.";

const char* const kMcqaOptions =
    "\n\nOptions:\nA. {A}\nB. {B}\nC. {C}\nD. {D}\n\nAnswer:";

PromptTemplates default_templates() {
  PromptTemplates t;
  t.image =
      "The following image is a frame from a certain scene from a certain movie.\n"
      "Can you name the movie?\n"
      "Here you should make your guess for the movie in the image. " +
      std::string(kGuessOnlyName) + "\n\nAnswer:";
  t.image_multi =
      "The following images are frames from a certain scene from a certain movie.\n"
      "Can you name the movie?\n"
      "Here you should make your guess for the movie in the images. " +
      std::string(kGuessOnlyName) + "\n\nAnswer:";
  t.caption =
      "The following caption describes a scene from a certain movie.\n"
      "Can you name the movie?\n"
      "Here you should make your guess for the movie in the image based on the caption. " +
      std::string(kGuessOnlyName) + "\n\n{caption}\n\nAnswer:";
  t.mcqa =
      "Question: The following image is a frame from a certain scene from a certain movie.\n"
      "Which of the following 4 options is the movie of this frame?" +
      std::string(kMcqaOptions);
  return t;
}

PromptTemplates paraphrased_templates() {
  PromptTemplates t = default_templates();
  t.image = "Can you identify the movie shown in this image?\n" + std::string(kGuessOnlyName) +
            "\n\nAnswer:";
  t.image_multi = "Can you identify the movie shown in these images?\n" +
                  std::string(kGuessOnlyName) + "\n\nAnswer:";
  t.caption = "Can you identify the movie described by this caption?\n" +
              std::string(kGuessOnlyName) + "\n\n{caption}\n\nAnswer:";
  return t;
}

PromptTemplates easier_templates() {
  PromptTemplates t = default_templates();
  t.image = "What Oscar-winning movie is this frame from?\n" + std::string(kGuessOnlyName) +
            "\n\nAnswer:";
  t.image_multi = "What Oscar-winning movie are these frames from?\n" +
                  std::string(kGuessOnlyName) + "\n\nAnswer:";
  return t;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

}  // namespace

PromptRegistry PromptRegistry::builtin() {
  PromptRegistry r;
  r.variants_["default"] = default_templates();
  r.variants_["paraphrased"] = paraphrased_templates();
  r.variants_["easier"] = easier_templates();
  return r;
}

PromptRegistry PromptRegistry::parse(std::string_view json_text) {
  PromptRegistry r;
  try {
    const json root = json::parse(json_text);
    r.version_ = root.at("version").get<int>();
    for (const auto& [id, v] : root.at("variants").items()) {
      PromptTemplates t;
      t.image = v.at("image").get<std::string>();
      t.image_multi = v.value("image_multi", t.image);
      t.caption = v.at("caption").get<std::string>();
      t.mcqa = v.at("mcqa").get<std::string>();
      r.variants_[id] = std::move(t);
    }
  } catch (const json::exception& e) {
    throw Error(Errc::ConfigError, std::string("prompt registry: ") + e.what());
  }
  if (!r.contains("default")) throw Error(Errc::ConfigError, "prompt registry lacks a 'default' variant");
  return r;
}

PromptRegistry PromptRegistry::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigError, "cannot read prompt registry " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

const PromptTemplates& PromptRegistry::get(std::string_view id) const {
  auto it = variants_.find(std::string(id));
  if (it == variants_.end()) throw Error(Errc::ConfigError, "unknown prompt variant '" + std::string(id) + "'");
  return it->second;
}

std::string PromptRegistry::to_json() const {
  json root;
  root["version"] = version_;
  root["variants"] = json::object();
  for (const auto& [id, t] : variants_) {
    root["variants"][id] = {
        {"image", t.image}, {"image_multi", t.image_multi}, {"caption", t.caption}, {"mcqa", t.mcqa}};
  }
  return root.dump(2) + "\n";
}

std::string render_image_prompt(const PromptTemplates& t, int frames) {
  return frames > 1 ? t.image_multi : t.image;
}

std::string render_caption_prompt(const PromptTemplates& t, std::string_view caption) {
  std::string out = t.caption;
  replace_all(out, "{caption}", caption);
  return out;
}

std::string render_mcqa_prompt(const PromptTemplates& t, std::span<const std::string> options) {
  if (options.size() != 4) throw Error(Errc::InvalidParam, "MCQA needs exactly 4 options");
  std::string out = t.mcqa;
  replace_all(out, "{A}", options[0]);
  replace_all(out, "{B}", options[1]);
  replace_all(out, "{C}", options[2]);
  replace_all(out, "{D}", options[3]);
  return out;
}

}  // namespace frameprobe
