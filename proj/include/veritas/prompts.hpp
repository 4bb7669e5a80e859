#pragma once

// Prompt texts whose answer formats the parsers accept. `<video>` marks the
// position of the video input.

#include <string>
#include <string_view>

#include "veritas/core.hpp"

namespace veritas::prompts {

inline constexpr std::string_view kDetectionSystem =
    "You are an expert video analyst.\n"
    "Please think about the question as if you were a human pondering deeply. It’s "
    "encouraged to include self-reflection or verification in the reasoning process. Then, "
    "give a final verdict within <answer> </answer> tags.";

inline constexpr std::string_view kDetectionUser = "<video>\nIs this video real or fake?";

inline constexpr std::string_view kPerceptionSystem =
    "You are an expert video analyst. Based on this video, provide the answer directly.";

inline constexpr std::string_view kCountingUser =
    "<video>\n"
    "Count the number of circles, squares, and triangles that appear in this video. Be aware "
    "that the shapes can appear in any color and at any angle of rotation. They may be present "
    "on one or multiple frames, and any given frame can contain more than one shape. Provide the "
    "answer as three comma-separated numbers in the format: circles,squares,triangles. For "
    "example, if you see 3 circles, 1 square, and 4 triangles, your answer should be \"3,1,4\".";

/// Grounding prompt for a free-text query description.
std::string grounding_user(std::string_view description);

/// Tracking prompt given the first-frame box.
std::string tracking_user(const BoundingBox& initial_box);

/// Artifact grounding prompt for a timestamp such as "4.5s".
std::string artifact_grounding_user(std::string_view time_label);

/// System and user prompt for a task, with placeholders left in braces
/// ({description}, {initial box}, {time}) where the task needs one.
std::string system_prompt(Task task);
std::string user_prompt_template(Task task);

}  // namespace veritas::prompts
