# RMDP Toolkit - Unit Tests
