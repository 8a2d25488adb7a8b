#include <cstdio>
int main() { std::puts("flockrl"); return 0; }
