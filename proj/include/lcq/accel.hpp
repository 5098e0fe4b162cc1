#pragma once

// Far-field accelerators: point sums of a layer-potential kernel over
// weighted sources, evaluated at a set of targets.

#include "lcq/kernels.hpp"
#include "lcq/types.hpp"

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lcq {

struct SourceSet {
  std::span<const Vec3> points;
  std::span<const Vec3> normals;  // required by double-layer and combined kernels
  std::span<const cplx> strengths;
  // Optional: groups of contiguous sources, group g = [offsets[g], offsets[g+1]).
  std::span<const std::size_t> group_offsets;
};

struct TargetSet {
  std::span<const Vec3> points;
  std::span<const Vec3> normals;  // required by the adjoint kernel
};

// Per target, sorted ids of source groups to leave out of the sum.
using GroupExclusion = std::vector<std::vector<int>>;

class FarAccelerator {
 public:
  virtual ~FarAccelerator() = default;
  virtual std::string name() const = 0;
  // Declared relative l2 accuracy; 0 for exact summation.
  virtual double accuracy() const = 0;

  // u(x_t) = sum_i K(x_t, y_i) s_i over pairs with |x_t - y_i| > min_dist.
  virtual VecXc evaluate(const KernelSpec& spec, const SourceSet& src, const TargetSet& tgt,
                         double min_dist) = 0;

  virtual bool supports_exclusion() const { return false; }
  // As evaluate, also omitting every (target, group) pair listed in excl.
  virtual VecXc evaluate_excluding(const KernelSpec& spec, const SourceSet& src,
                                   const TargetSet& tgt, double min_dist,
                                   const GroupExclusion& excl);

  const std::vector<Warning>& warnings() const { return warnings_; }

 protected:
  std::vector<Warning> warnings_;
};

std::unique_ptr<FarAccelerator> direct_accelerator();

struct TreecodeOptions {
  double eps = 1e-8;
  double theta = 0.5;  // box radius / distance below which proxies are used
  int n_proxy = 0;     // 0 picks a count from eps and theta
  int leaf_size = 0;   // 0 picks a size from n_proxy
  // Largest |k| * (root box side) handled before falling back to direct sums.
  double max_k_size = 8.0;
};

std::unique_ptr<FarAccelerator> treecode_accelerator(const TreecodeOptions& opt);
std::unique_ptr<FarAccelerator> treecode_accelerator(double eps, double theta = 0.5,
                                                     int n_proxy = 0);

// Proxy count used when TreecodeOptions::n_proxy is 0.
int default_proxy_count(double eps, double theta);

// Checks the inputs shared by every accelerator; throws ArgumentError.
void check_accelerator_input(const KernelSpec& spec, const SourceSet& src, const TargetSet& tgt);

}  // namespace lcq
