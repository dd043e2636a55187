int run_cli(int argc, char** argv);

int main(int argc, char** argv) { return run_cli(argc, argv); }
