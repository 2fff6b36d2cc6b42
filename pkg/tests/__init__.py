# Ensures unittest discovery can import tests as a package.
