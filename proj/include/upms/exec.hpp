#pragma once

namespace upms {

/// Selects the OpenMP kernel or its serial reference. Both produce identical results.
enum class Exec { Serial, Parallel };

}  // namespace upms
