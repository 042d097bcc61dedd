// One PASS/FAIL line per acceptance criterion; exit status is the number of
// failures.

#include "checks.hpp"

int main() { return denois::checks::report(denois::checks::acceptance()); }
