#include <cstdio>
int main() { std::puts("badt2i: placeholder"); return 0; }
