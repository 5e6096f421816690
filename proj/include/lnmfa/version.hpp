#pragma once

namespace lnmfa {

#ifdef LNMFA_VERSION_STRING
inline constexpr const char* version = LNMFA_VERSION_STRING;
#else
inline constexpr const char* version = "0.1.0";
#endif

}  // namespace lnmfa
