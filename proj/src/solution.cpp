#include "mbsde/solution.hpp"

#include <fmt/format.h>

#include <algorithm>

#include "mbsde/io.hpp"
#include "mbsde/stats.hpp"

namespace mbsde {

const char* to_string(SolutionKind kind) {
  switch (kind) {
    case SolutionKind::First: return "first";
    case SolutionKind::Second: return "second";
    case SolutionKind::Mixed: return "mixed";
    case SolutionKind::ExplicitLog: return "explicit_log";
    case SolutionKind::SquareEndpoint: return "square_endpoint";
    case SolutionKind::Iterated: return "iterated";
    case SolutionKind::TimeChanged: return "time_changed";
    case SolutionKind::Custom: return "custom";
  }
  return "custom";
}


double SolutionPath::y0() const {
  RunningStats s;
  for (const auto& tr : paths)
    if (!tr.truncated && !tr.y.empty()) s.add(tr.y.front());
  return s.count ? s.mean : std::numeric_limits<double>::quiet_NaN();
}

void write_solution_csv(const SolutionPath& solution, const std::string& file, std::size_t max_paths) {
  TextSink sink(file);
  sink.write("path_id,t,Y,Z\n");
  fmt::memory_buffer buf;
  for (std::size_t p = 0; p < std::min(max_paths, solution.n_paths()); ++p) {
    const auto& tr = solution.paths[p];
    for (std::size_t i = 0; i < tr.size(); ++i)
      fmt::format_to(std::back_inserter(buf), "{},{},{},{}\n", p, tr.t[i], tr.y[i], tr.z[i]);
    sink.write({buf.data(), buf.size()});
    buf.clear();
  }
}

}  // namespace mbsde
