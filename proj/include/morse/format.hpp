#ifndef MORSE_FORMAT_HPP
#define MORSE_FORMAT_HPP

#include <string>
#include <vector>

namespace morse {

// Shortest round-trip decimal representation of a double (std::to_chars).
// Used by every CSV/JSON writer so that identical inputs produce
// byte-identical artifacts across runs and platforms.
std::string format_double(double v);

// Comma-joined format_double of each entry.
std::string format_row(const std::vector<double>& row);

} // namespace morse

#endif
