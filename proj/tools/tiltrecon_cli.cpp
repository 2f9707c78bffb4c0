#include "tiltrecon/tiltrecon.hpp"
int main() { return 0; }
