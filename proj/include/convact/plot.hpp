#ifndef CONVACT_PLOT_HPP
#define CONVACT_PLOT_HPP

#include <string>
#include <vector>

namespace convact {

// Writes <path_base>.svg and <path_base>.png. The SVG carries labels and
// exact bar geometry; the PNG is a plain raster of the same bars.
void write_bar_chart(const std::string& path_base, const std::string& title,
                     const std::vector<std::string>& labels,
                     const std::vector<double>& values);

}  // namespace convact

#endif
