#include "tpv/encoder/config.hpp"

#include <algorithm>
#include <string>

#include "tpv/errors.hpp"

namespace tpv::encoder {

void BackboneConfig::validate() const {
  if (stage_channels.empty()) throw ConfigError("backbone needs at least one stage");
  for (auto c : stage_channels) {
    if (c < 1) throw ConfigError("backbone stage channels must be >= 1");
  }
  if (scales < 1 || scales > 2 || scales > static_cast<int>(stage_channels.size())) {
    throw ConfigError("backbone scales must be 1 or 2 and not exceed the stage count");
  }
}

void EncoderConfig::validate() const {
  grid.validate();
  backbone.validate();
  if (hcab_blocks < 1) throw ConfigError("encoder needs at least one HCAB block (N1 >= 1)");
  if (hab_blocks < 0) throw ConfigError("HAB block count must be >= 0");
  if (channels < 2) throw ConfigError("encoder channels must be >= 2");
  if (heads < 1 || points_per_head < 1) throw ConfigError("heads and points per head must be >= 1");
  if (channels % heads != 0) {
    throw ConfigError("channels (" + std::to_string(channels) + ") must be divisible by heads (" +
                      std::to_string(heads) + ")");
  }
  if (ffn_expansion < 1) throw ConfigError("feed-forward expansion must be >= 1");
  for (View v : views()) {
    const auto n = ica_ref_count(v);
    if (n < 1 || n > grid.orthogonal_extent(v)) {
      throw ConfigError("image cross-attention reference count for the " + std::string(geometry::view_name(v)) +
                        " plane must lie in [1, " + std::to_string(grid.orthogonal_extent(v)) + "]");
    }
  }
  cvha_options().validate();
}

std::int64_t EncoderConfig::ica_ref_count(View v) const {
  const auto n = ica_refs[static_cast<int>(v)];
  if (n != 0) return n;
  const auto extent = grid.orthogonal_extent(v);
  return std::min<std::int64_t>(v == View::Top ? 4 : 8, extent);
}

std::int64_t EncoderConfig::cvha_cross_count(View v) const {
  const auto n = cvha_cross[static_cast<int>(v)];
  return n != 0 ? n : ica_ref_count(v);
}

geometry::CvhaOptions EncoderConfig::cvha_options() const {
  geometry::CvhaOptions o;
  o.radius = cvha_radius;
  o.same_count = cvha_same;
  for (View v : geometry::kViews) o.cross_count[static_cast<int>(v)] = cvha_cross_count(v);
  return o;
}

std::vector<View> EncoderConfig::views() const {
  if (bev) return {View::Top};
  return {View::Top, View::Side, View::Front};
}

}  // namespace tpv::encoder
