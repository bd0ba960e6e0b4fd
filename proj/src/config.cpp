#include "labelaudit/config.hpp"

#include <functional>
#include <json.hpp>
#include <map>

#include "labelaudit/error.hpp"
#include "labelaudit/io.hpp"

namespace labelaudit {

namespace {

using nlohmann::json;
using Setter = std::function<void(const json&)>;

template <typename T>
Setter bind(T& field) {
  return [&field](const json& j) { field = j.get<T>(); };
}

void apply_fields(std::string_view text, const char* what, const std::map<std::string, Setter>& fields) {
  try {
    const json root = json::parse(text.begin(), text.end());
    if (!root.is_object()) throw SchemaError(std::string(what) + " config must be a JSON object");
    for (const auto& [key, value] : root.items()) {
      auto it = fields.find(key);
      if (it == fields.end()) throw SchemaError(std::string(what) + " config: unknown key '" + key + "'");
      it->second(value);
    }
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(what) + " config: " + e.what(), 0);
  } catch (const json::exception& e) {
    throw SchemaError(std::string(what) + " config: " + e.what());
  }
}

}  // namespace

SynthConfig parse_synth_config(std::string_view text) {
  SynthConfig c;
  apply_fields(text, "synth",
               {{"num_images", bind(c.num_images)},
                {"objects_per_image", bind(c.objects_per_image)},
                {"num_classes", bind(c.num_classes)},
                {"width", bind(c.width)},
                {"height", bind(c.height)},
                {"min_extent", bind(c.min_extent)},
                {"max_extent", bind(c.max_extent)},
                {"seed", bind(c.seed)}});
  return c;
}

CorruptionConfig parse_corruption_config(std::string_view text) {
  CorruptionConfig c;
  apply_fields(text, "corruption",
               {{"gamma", bind(c.gamma)},
                {"seed", bind(c.seed)},
                {"shift_std_factor", bind(c.shift_std_factor)},
                {"shift_iou_low", bind(c.shift_iou_low)},
                {"shift_iou_high", bind(c.shift_iou_high)},
                {"max_rejection_iters", bind(c.max_rejection_iters)},
                {"shift_y_uses_width", bind(c.shift_y_uses_width)},
                {"spawn_max_object_iou", bind(c.spawn_max_object_iou)}});
  check_config(c);
  return c;
}

SimulatorConfig parse_simulator_config(std::string_view text) {
  SimulatorConfig c;
  apply_fields(text, "simulator",
               {{"seed", bind(c.seed)},
                {"loc_noise_factor", bind(c.loc_noise_factor)},
                {"miss_rate", bind(c.miss_rate)},
                {"clutter_per_image", bind(c.clutter_per_image)},
                {"class_accuracy", bind(c.class_accuracy)},
                {"dirichlet_concentration", bind(c.dirichlet_concentration)},
                {"objectness_sharpness", bind(c.objectness_sharpness)},
                {"score_noise", bind(c.score_noise)},
                {"refine_pull", bind(c.refine_pull)},
                {"background_mass", bind(c.background_mass)},
                {"foreground_iou", bind(c.foreground_iou)},
                {"clutter_min_extent", bind(c.clutter_min_extent)},
                {"clutter_max_extent", bind(c.clutter_max_extent)}});
  return c;
}

PipelineConfig parse_pipeline_config(std::string_view text) {
  PipelineConfig c;
  apply_fields(text, "pipeline",
               {{"s_epsilon", bind(c.s_epsilon)},
                {"tau", bind(c.tau)},
                {"nms_iou_stage1", bind(c.nms_iou_stage1)},
                {"nms_iou_stage2", bind(c.nms_iou_stage2)},
                {"assign_iou", bind(c.assign_iou)},
                {"pd_assign_iou", bind(c.pd_assign_iou)},
                {"smooth_l1_beta", bind(c.smooth_l1_beta)},
                {"s_epsilon_in_loss", bind(c.s_epsilon_in_loss)},
                {"rpn_delta_stds", bind(c.rpn_delta_stds)},
                {"roi_delta_stds", bind(c.roi_delta_stds)}});
  check_config(c);
  return c;
}

template <typename Config>
Config load_config(const std::filesystem::path& path, Config (*parse)(std::string_view)) {
  return parse(read_text_file(path));
}

template SynthConfig load_config(const std::filesystem::path&, SynthConfig (*)(std::string_view));
template CorruptionConfig load_config(const std::filesystem::path&, CorruptionConfig (*)(std::string_view));
template SimulatorConfig load_config(const std::filesystem::path&, SimulatorConfig (*)(std::string_view));
template PipelineConfig load_config(const std::filesystem::path&, PipelineConfig (*)(std::string_view));

}  // namespace labelaudit
