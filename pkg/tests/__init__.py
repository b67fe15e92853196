# Test package for graphssl
