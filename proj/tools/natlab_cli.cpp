#include <cstdio>
int main() { std::puts("natlab: placeholder"); return 0; }
