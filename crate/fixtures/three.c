void run(int n) {
    for (int i = 0; i < n; ++i)
        loop(i);
}
