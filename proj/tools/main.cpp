#include "wgmc/cli.hpp"

int main(int argc, char** argv)
{
    return wgmc::run_cli(argc, argv);
}
