// Placeholder; grown together with the experiment modules.
#include <iostream>

int main() {
  std::cout << "ctm: experiment CLI (under construction)\n";
  return 0;
}
