#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include "ecodrive/logging.hpp"

int main(int argc, char** argv) {
  ecodrive::configure_logging("warn");
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
