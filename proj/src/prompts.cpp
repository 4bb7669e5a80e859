#include "veritas/prompts.hpp"

#include <sstream>

namespace veritas::prompts {

namespace {

std::string number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::string grounding_user(std::string_view description) {
  std::string out = "<video>\nGiven the query \"";
  out += description;
  out +=
      "\", when and where does the described content occur in the video? please firstly give "
      "the start and end time, spatial bounding box corresponding to each integer second.\n"
      "\n"
      "Please provide only the time span in seconds and bounding boxes as JSON, ONLY up to 16 "
      "seconds.\n"
      "You MUST output one bounding box for every integer second within the given time span "
      "(inclusive).\n"
      "Example:\n"
      "{\"time\": [8.125, 13.483], \"boxes\": {\"9\": [317, 422, 582, 997], \"10\": [332, 175, "
      "442, 369], \"11\": [340, 180, 450, 370]}}\n"
      "Note: Each key in \"boxes\" must be an integer second within the span, and its value "
      "must be a 4-number bounding box [x1, y1, x2, y2].";
  return out;
}

std::string tracking_user(const BoundingBox& b) {
  std::string box = "[" + number(b.x1) + ", " + number(b.y1) + ", " + number(b.x2) + ", " +
                    number(b.y2) + "]";
  return "<video>\nGiven the bounding box \"" + box +
         "\" of the target object in the first frame, track this object in each frame and "
         "output its bounding box once per second.ONLY up to 16 seconds.\n"
         "Example:\n"
         "{\"boxes\": {\"1\": [405, 230, 654, 463], \"2\": [435, 223, 678, 446], ..., \"16\": "
         "[415, 203, 691, 487]}}\n"
         "Note: Each key in \"boxes\" must correspond to a second (1, 2, 3, ..., 16) and contain "
         "a 4-number bounding box [x1, y1, x2, y2].";
}

std::string artifact_grounding_user(std::string_view time_label) {
  std::string out = "<video>\nFind the visual artifacts at \"";
  out += time_label;
  out +=
      "\" in the video.\n"
      "Provide the bounding boxes where the artifact occurred, in [xmin, ymin, xmax, ymax] "
      "format. If there are multiple locations, you should provide all the bounding boxes.\n"
      "Example:\n"
      "{\"boxes\": [[487, 324, 573, 398], [670, 533, 734, 769], ...]]}.";
  return out;
}

std::string system_prompt(Task task) {
  return std::string(task == Task::kDetection ? kDetectionSystem : kPerceptionSystem);
}

std::string user_prompt_template(Task task) {
  switch (task) {
    case Task::kDetection: return std::string(kDetectionUser);
    case Task::kCounting: return std::string(kCountingUser);
    case Task::kGrounding: return grounding_user("{description}");
    case Task::kTracking: {
      std::string t = tracking_user(BoundingBox{});
      const std::string zero = "[0, 0, 0, 0]";
      t.replace(t.find(zero), zero.size(), "{initial box}");
      return t;
    }
    case Task::kArtifactGrounding: return artifact_grounding_user("{time}");
  }
  return {};
}

}  // namespace veritas::prompts
