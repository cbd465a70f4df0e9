// Dedicated acceptance runner: executes the packaged thirteen-criterion
// suite against a spec file (default: the shipped desk-scale spec) and
// prints one PASS/FAIL line per criterion.  Exit 0 only if every criterion
// passes; an optional second argument names a persisted rows.csv to verify
// instead of a fresh run.

#include <iostream>
#include <string>

#include "sseplab/harness.hpp"
#include "sseplab/verify.hpp"

int main(int argc, char** argv) {
  using namespace sseplab;
  const std::string spec_path = argc > 1 ? argv[1] : "configs/desk.cfg";
  const std::string rows_path = argc > 2 ? argv[2] : "";
  try {
    const harness::ExperimentSpec spec = harness::load_spec(spec_path);
    const verify::AcceptanceReport report =
        verify::run_acceptance(spec, rows_path, std::cout, 0);
    return report.all_pass() ? 0 : 1;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  }
}
