#include <cstdio>

int main() {
  std::puts("otlrm: placeholder");
  return 0;
}
