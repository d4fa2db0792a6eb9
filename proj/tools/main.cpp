#include <vector>

#include "uscliplab/pipeline.hpp"

int main(int argc, char** argv) {
  return usclip::run_command(std::vector<std::string>(argv + 1, argv + argc));
}
