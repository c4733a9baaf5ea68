#pragma once

namespace hce {

#ifdef HCE_REAL_FLOAT32
using Real = float;
#else
using Real = double;
#endif

}  // namespace hce
