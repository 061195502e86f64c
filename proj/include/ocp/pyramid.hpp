#pragma once

#include <cstdint>
#include <span>

#include "ocp/store.hpp"
#include "ocp/types.hpp"

namespace ocp {

/// Mean of up to four samples, rounded half up. RGBA samples average per byte.
std::uint32_t mean_half_up(std::span<const std::uint32_t> samples, VoxelType type);

/// Most frequent nonzero label; ties go to the smallest id; 0 if all are 0.
std::uint32_t vote_label(std::span<const std::uint32_t> labels);

/// Rebuilds every level above 0 from level 0 by 2x2 XY reduction. The project
/// is locked against foreground writes for the duration.
void build_image_pyramid(const ProjectContext& ctx);

/// Rebuilds every level other than the project's annotation level from it:
/// voting on the way down, replication (exceptions included) on the way up.
/// The sparse index is rebuilt at every level. Locks the project.
void propagate_annotations(const ProjectContext& ctx);

/// Holds the project lock; throws kLocked if another job holds it.
class ProjectLock {
 public:
  explicit ProjectLock(ProjectState& state);
  ~ProjectLock();
  ProjectLock(const ProjectLock&) = delete;
  ProjectLock& operator=(const ProjectLock&) = delete;

 private:
  ProjectState& state_;
};

}  // namespace ocp
