#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gridgin/grid.hpp"

namespace gridgin {

class AugmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AugmentAction { AddNodes, RemoveNodes };

const char* to_string(AugmentAction a) noexcept;
AugmentAction augment_action_from_string(const std::string& s);

/// A place where augmentation may act.
struct CandidateSite {
  enum class Kind { RemoveLeaf, SplitEdge, AttachLeaf };
  Kind kind;
  std::int32_t id;  // node id, or edge id for SplitEdge

  friend bool operator==(const CandidateSite&, const CandidateSite&) = default;
};

struct CandidateSet {
  AugmentAction action = AugmentAction::AddNodes;
  std::vector<CandidateSite> sites;

  /// Node ids among the sites (removable leaves or attachment points).
  std::vector<NodeId> nodes() const;
  /// Edge ids among the sites (splittable cables).
  std::vector<EdgeId> edges() const;
};

/// Label 0: radial leaf distribution stations whose removal keeps the closed
/// graph connected and leaves every feeder with a station.
/// Label 1: every cable (split in two) plus every zero-load station (receives
/// a new leaf). A loaded spur would itself break the n-1 property.
/// Throws AugmentError when nothing qualifies.
CandidateSet select_candidates(const LabeledSample& sample);

struct AugmentationRecord {
  std::string source_id;
  AugmentAction action = AugmentAction::AddNodes;
  std::vector<NodeId> affected;  // new ids when adding, original ids when removing
  bool label_verified = false;
};

struct AugmentOptions {
  double max_deviation = 0.05;
  unsigned threads = 1;
};

/// Applies one augmentation drawn from the candidate set. The number of sites
/// used is uniform on [1, |candidates|]. The returned sample keeps the source
/// label; `label_verified` tells whether the oracle agrees on the new grid.
std::pair<LabeledSample, AugmentationRecord> augment(const LabeledSample& sample,
                                                     std::uint64_t seed,
                                                     const std::string& source_id = {},
                                                     const AugmentOptions& options = {});

}  // namespace gridgin
